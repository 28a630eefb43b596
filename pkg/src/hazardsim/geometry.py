"""Exact 2D predicates on normalized rectangles and polygons.

Rectangles are (x_min, y_min, x_max, y_max) tuples with the origin at the
top-left of the frame. Polygons are ordered vertex lists, implicitly closed
(last vertex connects back to the first). All intersection predicates are
closed-set: shared boundary points count as intersecting.
"""

from __future__ import annotations

from typing import Sequence, Tuple

Point = Tuple[float, float]
Rect = Tuple[float, float, float, float]


def rect_iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection-over-union of two axis-aligned rectangles."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _orient(p: Point, q: Point, r: Point) -> float:
    """Signed area of the triangle pqr; 0 means collinear."""
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p: Point, q: Point, r: Point) -> bool:
    """True if r lies on the closed segment pq, assuming p, q, r collinear."""
    return (
        min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
        and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
    )


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """Closed-segment intersection test (touching endpoints count)."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def _polygon_edges(vertices: Sequence[Point]):
    n = len(vertices)
    for i in range(n):
        yield vertices[i], vertices[(i + 1) % n]


def point_in_polygon(point: Point, vertices: Sequence[Point]) -> bool:
    """Closed point-in-polygon test: boundary points count as inside.

    Ray casting with an explicit on-boundary check first, so points that sit
    exactly on an edge or a vertex are classified deterministically.
    """
    x, y = point
    for a, b in _polygon_edges(vertices):
        if _orient(a, b, point) == 0 and _on_segment(a, b, point):
            return True
    inside = False
    n = len(vertices)
    j = n - 1
    for i in range(n):
        xi, yi = vertices[i]
        xj, yj = vertices[j]
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) / (yj - yi) * (xj - xi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def point_in_rect(point: Point, rect: Sequence[float]) -> bool:
    return rect[0] <= point[0] <= rect[2] and rect[1] <= point[1] <= rect[3]


def _rect_corners(rect: Sequence[float]) -> Tuple[Point, Point, Point, Point]:
    x0, y0, x1, y1 = rect
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def rect_polygon_intersect(rect: Sequence[float], vertices: Sequence[Point]) -> bool:
    """Closed-set intersection between a rectangle and a simple polygon.

    Exact edge-crossing plus mutual containment tests; no sampling. Returns
    True when the closed rectangle and the closed polygon share at least one
    point, including single boundary points.
    """
    corners = _rect_corners(rect)
    # Polygon vertex inside (or on) the rectangle.
    for v in vertices:
        if point_in_rect(v, rect):
            return True
    # Rectangle corner inside (or on) the polygon.
    for c in corners:
        if point_in_polygon(c, vertices):
            return True
    # Any edge pair crossing or touching.
    rect_edges = list(_polygon_edges(corners))
    for pa, pb in _polygon_edges(vertices):
        for qa, qb in rect_edges:
            if segments_intersect(pa, pb, qa, qb):
                return True
    return False


def polygon_is_simple(vertices: Sequence[Point]) -> bool:
    """True if the closed polygon has no self-intersections.

    Non-adjacent edges must not touch at all; adjacent edges may only share
    their common vertex (collinear overlap of adjacent edges is rejected).
    Degenerate inputs (repeated vertices, < 3 vertices) are not simple.
    """
    n = len(vertices)
    if n < 3:
        return False
    if len({(float(x), float(y)) for x, y in vertices}) != n:
        return False
    edges = list(_polygon_edges(vertices))
    for i in range(n):
        for j in range(i + 1, n):
            p1, p2 = edges[i]
            q1, q2 = edges[j]
            if j == i + 1:
                # Consecutive edges share p2 == q1; reject a collinear
                # fold-back where one edge re-enters the other.
                if _orient(p1, p2, q2) == 0 and (
                    _on_segment(p1, p2, q2) or _on_segment(q1, q2, p1)
                ):
                    return False
            elif i == 0 and j == n - 1:
                # Closing edge shares q2 == p1.
                if _orient(p1, p2, q1) == 0 and (
                    _on_segment(p1, p2, q1) or _on_segment(q1, q2, p2)
                ):
                    return False
            else:
                if segments_intersect(p1, p2, q1, q2):
                    return False
    return True

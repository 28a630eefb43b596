"""Frame-to-frame association of detections into persistent tracks.

Association is globally greedy by descending IoU with deterministic
tie-breaking, gated by class. Confidence is smoothed with an exponential
moving average on hits and multiplicative decay on misses. No motion model:
matching is against the last seen bbox.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .clipstore import Detection, FrameRecord, Rect
from .errors import OutOfOrderFrame, SchemaViolation
from .geometry import rect_iou

TENTATIVE = "tentative"
CONFIRMED = "confirmed"
EXPIRED = "expired"


@dataclass(frozen=True)
class TrackerParams:
    iou_match_threshold: float = 0.3
    confidence_smoothing_alpha: float = 0.6
    confirm_hits: int = 2
    miss_decay: float = 0.85
    expire_after_misses: int = 5

    def __post_init__(self):
        if not (0.0 < self.iou_match_threshold < 1.0):
            raise SchemaViolation("iou_match_threshold must be in (0, 1)")
        if not (0.0 < self.confidence_smoothing_alpha <= 1.0):
            raise SchemaViolation("confidence_smoothing_alpha must be in (0, 1]")
        if self.confirm_hits < 1:
            raise SchemaViolation("confirm_hits must be >= 1")
        if not (0.0 < self.miss_decay <= 1.0):
            raise SchemaViolation("miss_decay must be in (0, 1]")
        if self.expire_after_misses < 1:
            raise SchemaViolation("expire_after_misses must be >= 1")

    def to_obj(self) -> dict:
        return {
            "iou_match_threshold": self.iou_match_threshold,
            "confidence_smoothing_alpha": self.confidence_smoothing_alpha,
            "confirm_hits": self.confirm_hits,
            "miss_decay": self.miss_decay,
            "expire_after_misses": self.expire_after_misses,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "TrackerParams":
        return cls(**obj)


@dataclass(frozen=True)
class Track:
    """Immutable snapshot of one track after an update."""

    track_id: int
    node_id: str
    cls: str
    smoothed_confidence: float
    last_bbox: Rect
    last_seen_frame: int
    hit_count: int
    state: str

    def to_obj(self) -> dict:
        return {
            "track_id": self.track_id,
            "node_id": self.node_id,
            "class": self.cls,
            "smoothed_confidence": self.smoothed_confidence,
            "last_bbox": list(self.last_bbox),
            "last_seen_frame": self.last_seen_frame,
            "hit_count": self.hit_count,
            "state": self.state,
        }


class _LiveTrack:
    __slots__ = (
        "track_id",
        "node_id",
        "cls",
        "smoothed_confidence",
        "last_bbox",
        "last_seen_frame",
        "hit_count",
        "state",
        "consecutive_misses",
    )

    def __init__(self, track_id: int, node_id: str, detection: Detection, frame_index: int):
        self.track_id = track_id
        self.node_id = node_id
        self.cls = detection.cls
        self.smoothed_confidence = detection.confidence
        self.last_bbox = detection.bbox
        self.last_seen_frame = frame_index
        self.hit_count = 1
        self.state = TENTATIVE
        self.consecutive_misses = 0

    def snapshot(self) -> Track:
        return Track(
            track_id=self.track_id,
            node_id=self.node_id,
            cls=self.cls,
            smoothed_confidence=self.smoothed_confidence,
            last_bbox=self.last_bbox,
            last_seen_frame=self.last_seen_frame,
            hit_count=self.hit_count,
            state=self.state,
        )


class _NodeState:
    __slots__ = ("tracks", "next_track_id", "last_frame_index")

    def __init__(self):
        self.tracks: List[_LiveTrack] = []
        self.next_track_id = 1
        self.last_frame_index = -1


class TrackerState:
    """Live tracks per node. Track ids count per node, so node streams can be
    processed independently or interleaved with identical results; a track is
    globally named by the (node_id, track_id) pair.

    Single-writer per node: at most one in-flight update per node_id.
    """

    def __init__(self):
        self._nodes: Dict[str, _NodeState] = {}

    def node(self, node_id: str) -> _NodeState:
        if node_id not in self._nodes:
            self._nodes[node_id] = _NodeState()
        return self._nodes[node_id]

    def live_tracks(self, node_id: str) -> List[Track]:
        if node_id not in self._nodes:
            return []
        return [t.snapshot() for t in self._nodes[node_id].tracks]


def greedy_assign(
    scores: Sequence[Sequence[float]], threshold: float
) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """Globally greedy one-to-one assignment on a score matrix.

    Pairs scoring >= threshold are taken in order of descending score,
    ties broken by (row index, column index). Returns (pairs, unmatched
    rows, unmatched columns).
    """
    candidates = []
    for i, row in enumerate(scores):
        for j, score in enumerate(row):
            if score >= threshold:
                candidates.append((-score, i, j))
    candidates.sort()
    used_rows: set = set()
    used_cols: set = set()
    pairs: List[Tuple[int, int]] = []
    for _neg, i, j in candidates:
        if i in used_rows or j in used_cols:
            continue
        used_rows.add(i)
        used_cols.add(j)
        pairs.append((i, j))
    unmatched_rows = [i for i in range(len(scores)) if i not in used_rows]
    n_cols = len(scores[0]) if scores else 0
    unmatched_cols = [j for j in range(n_cols) if j not in used_cols]
    return pairs, unmatched_rows, unmatched_cols


@dataclass(frozen=True)
class Association:
    """Outcome of matching one frame's detections against live tracks."""

    matches: Tuple[Tuple[int, int], ...]  # (track index, detection index)
    unmatched_tracks: Tuple[int, ...]
    unmatched_detections: Tuple[int, ...]


def associate(
    tracks: Sequence, detections: Sequence[Detection], params: TrackerParams
) -> Association:
    """One-to-one greedy IoU matching, class-gated.

    ``tracks`` may be Track snapshots or live internal tracks; only
    ``last_bbox``, ``cls`` and ``track_id`` are read. Tracks must be ordered
    by ascending track_id (they are, everywhere in this package).
    """
    if not tracks or not detections:
        return Association(
            matches=(),
            unmatched_tracks=tuple(range(len(tracks))),
            unmatched_detections=tuple(range(len(detections))),
        )
    matrix = []
    for track in tracks:
        row = []
        for det in detections:
            if det.cls != track.cls:
                row.append(-1.0)
            else:
                row.append(rect_iou(track.last_bbox, det.bbox))
        matrix.append(row)
    pairs, unmatched_rows, unmatched_cols = greedy_assign(
        matrix, params.iou_match_threshold
    )
    return Association(
        matches=tuple(pairs),
        unmatched_tracks=tuple(unmatched_rows),
        unmatched_detections=tuple(unmatched_cols),
    )


def update_tracks(
    state: TrackerState, frame: FrameRecord, params: TrackerParams
) -> Tuple[TrackerState, List[Track]]:
    """Advance one node's tracks by one frame; returns post-update live tracks.

    Matched tracks blend the detection confidence into the running average
    and may confirm; unmatched tracks decay and expire after
    ``expire_after_misses`` consecutive misses, on exactly that frame.
    Unmatched detections spawn tentative tracks.
    """
    node = state.node(frame.node_id)
    if frame.frame_index <= node.last_frame_index:
        raise OutOfOrderFrame(
            f"node {frame.node_id}: frame {frame.frame_index} arrived after "
            f"frame {node.last_frame_index}"
        )
    node.last_frame_index = frame.frame_index

    assoc = associate(node.tracks, frame.detections, params)
    alpha = params.confidence_smoothing_alpha

    for track_idx, det_idx in assoc.matches:
        track = node.tracks[track_idx]
        det = frame.detections[det_idx]
        track.smoothed_confidence = (
            alpha * det.confidence + (1.0 - alpha) * track.smoothed_confidence
        )
        track.last_bbox = det.bbox
        track.last_seen_frame = frame.frame_index
        track.hit_count += 1
        track.consecutive_misses = 0
        if track.state == TENTATIVE and track.hit_count >= params.confirm_hits:
            track.state = CONFIRMED

    survivors: List[_LiveTrack] = []
    matched_indices = {i for i, _ in assoc.matches}
    for idx, track in enumerate(node.tracks):
        if idx in matched_indices:
            survivors.append(track)
            continue
        track.consecutive_misses += 1
        track.smoothed_confidence *= params.miss_decay
        if track.consecutive_misses >= params.expire_after_misses:
            track.state = EXPIRED
        else:
            survivors.append(track)
    node.tracks = survivors

    for det_idx in assoc.unmatched_detections:
        det = frame.detections[det_idx]
        track = _LiveTrack(node.next_track_id, frame.node_id, det, frame.frame_index)
        node.next_track_id += 1
        if track.hit_count >= params.confirm_hits:
            track.state = CONFIRMED
        node.tracks.append(track)

    return state, [t.snapshot() for t in node.tracks]

"""Metrics against ground truth: precision, recall, alert %, alert delay.

Precision and recall are frame-wise over the per-frame alert candidates
(the pipeline output that would reach the wearables, taken before the
per-device debounce). Alert % and delays attribute each alert event to
ground-truth persons by bbox overlap, falling back to the nearest person
center when nothing overlaps.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .clipstore import Clip, GroundTruthPerson, Rect
from .errors import ClipMismatch, DomainError, EmptyCell, MissingFile, NegativeDelayWarning, SchemaViolation
from .geometry import rect_iou
from .tracker import greedy_assign

DEFAULT_MATCH_IOU = 0.5
DEFAULT_BIN_WIDTH_MS = 200.0

CAPTURE_SIMULATED = "simulated"
CAPTURE_HARNESS_LOOP = "harness_loop"


# ---------------------------------------------------------------------------
# Run log


class RunLog:
    """Totally ordered, replayable record of one pipeline run.

    ``header`` identifies the run (clip, node map, config snapshot, seed);
    ``records`` is the ordered body. Persists as line-delimited JSON with
    canonical key order, so identical runs serialize byte-identically.
    """

    def __init__(self, header: dict, records: List[dict]):
        self.header = header
        self.records = records

    # -- accessors ---------------------------------------------------------

    @property
    def clip_id(self) -> str:
        return self.header["clip_id"]

    @property
    def node_map(self) -> Dict[str, str]:
        """run node id -> source clip node id"""
        return self.header["node_map"]

    @property
    def capture(self) -> str:
        return self.header.get("capture", CAPTURE_SIMULATED)

    @property
    def config(self) -> dict:
        return self.header["config"]

    @property
    def status(self) -> str:
        for record in reversed(self.records):
            if record.get("record") == "end":
                return record["status"]
        return "incomplete"

    def iter_kind(self, kind: str) -> Iterable[dict]:
        return (r for r in self.records if r.get("record") == kind)

    def alerts(self) -> List[dict]:
        return list(self.iter_kind("alert"))

    def deliveries(self) -> List[dict]:
        return list(self.iter_kind("delivery"))

    def candidates_by_frame(self) -> Dict[Tuple[str, int], List[dict]]:
        out: Dict[Tuple[str, int], List[dict]] = {}
        for record in self.iter_kind("candidates"):
            out[(record["node"], record["frame_index"])] = record["candidates"]
        return out

    def frames_processed(self) -> int:
        return sum(1 for _ in self.iter_kind("frame"))

    # -- serialization -----------------------------------------------------

    def to_bytes(self) -> bytes:
        lines = [json.dumps(self.header, separators=(",", ":"), allow_nan=False)]
        lines.extend(
            json.dumps(record, separators=(",", ":"), allow_nan=False)
            for record in self.records
        )
        return ("\n".join(lines) + "\n").encode("utf-8")

    def save(self, path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(self.to_bytes())
        return p

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RunLog":
        lines = [line for line in blob.decode("utf-8").splitlines() if line.strip()]
        if not lines:
            raise SchemaViolation("run log is empty")
        parsed = [json.loads(line) for line in lines]
        if parsed[0].get("record") != "header":
            raise SchemaViolation("run log does not start with a header record")
        return cls(header=parsed[0], records=parsed[1:])

    @classmethod
    def load(cls, path) -> "RunLog":
        p = Path(path)
        if not p.exists():
            raise MissingFile(f"run log {p} does not exist")
        return cls.from_bytes(p.read_bytes())


@dataclass(frozen=True)
class LatencyAccounting:
    """Constants applied to raw alert delays before reporting.

    A harness-loop capture deducts the measured host round trip and adds
    the real camera sensing latency; an internally simulated run has no
    harness loop to deduct, so only the sensing latency is added. Mesh
    delivery latency is excluded unless include_mesh is set.
    """

    harness_round_trip: float = 83.0
    sensing_latency: float = 67.0
    include_mesh: bool = False

    def __post_init__(self):
        if self.harness_round_trip < 0 or self.sensing_latency < 0:
            raise DomainError("latency constants must be >= 0")

    def compensate(self, raw_ms: float, capture: str) -> float:
        if capture == CAPTURE_HARNESS_LOOP:
            return raw_ms - self.harness_round_trip + self.sensing_latency
        return raw_ms + self.sensing_latency


# ---------------------------------------------------------------------------
# Frame-wise precision / recall


def _bbox_of(item) -> Rect:
    bbox = getattr(item, "last_bbox", None)
    if bbox is None:
        bbox = item["bbox"] if isinstance(item, Mapping) else item
    return tuple(bbox)


def match_frame(
    detected_tracks: Sequence, gt_boxes: Sequence, iou_threshold: float
) -> Tuple[int, int, int]:
    """Greedy one-to-one matching of one frame: returns (TP, FP, FN).

    ``detected_tracks`` may be Track snapshots, candidate dicts, or bare
    bboxes; ``gt_boxes`` are bare bboxes.
    """
    if not (0.0 < iou_threshold < 1.0):
        raise DomainError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    det_boxes = [_bbox_of(t) for t in detected_tracks]
    matrix = [[rect_iou(db, tuple(gb)) for gb in gt_boxes] for db in det_boxes]
    pairs, _, _ = greedy_assign(matrix, iou_threshold)
    tp = len(pairs)
    return tp, len(det_boxes) - tp, len(gt_boxes) - tp


def _check_run_clip(run: RunLog, clip: Clip) -> None:
    if run.clip_id != clip.clip_id:
        raise ClipMismatch(f"run is for clip {run.clip_id!r}, got {clip.clip_id!r}")
    for run_node, source in run.node_map.items():
        if source not in clip.streams:
            raise ClipMismatch(f"run node {run_node!r} maps to unknown clip node {source!r}")


def pr_counts(
    run: RunLog, clip: Clip, iou_threshold: float = DEFAULT_MATCH_IOU, cls: str = "person"
) -> Tuple[int, int, int]:
    """Summed (TP, FP, FN) over every (node, frame) of a run."""
    _check_run_clip(run, clip)
    n_frames = clip.frame_count
    candidates = run.candidates_by_frame()
    for (node, frame_index) in candidates:
        if node not in run.node_map or frame_index >= n_frames:
            raise ClipMismatch(f"run references unknown frame ({node!r}, {frame_index})")
    tp = fp = fn = 0
    for run_node, source in sorted(run.node_map.items()):
        persons = clip.persons_on(source)
        for frame_index in range(n_frames):
            cand = [
                c for c in candidates.get((run_node, frame_index), []) if c["class"] == cls
            ]
            gt_boxes = [
                p.bbox_at(frame_index)
                for p in persons
                if p.bbox_at(frame_index) is not None
            ]
            t, f, n = match_frame(cand, gt_boxes, iou_threshold)
            tp += t
            fp += f
            fn += n
    return tp, fp, fn


def precision_recall(tp: int, fp: int, fn: int) -> Tuple[float, float]:
    """Ratios with the empty-denominator convention (1.0 when undefined)."""
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    return precision, recall


def framewise_pr(
    run: RunLog, clip: Clip, iou_threshold: float = DEFAULT_MATCH_IOU
) -> Tuple[float, float]:
    """Frame-wise precision and recall of a run against its clip."""
    return precision_recall(*pr_counts(run, clip, iou_threshold))


# ---------------------------------------------------------------------------
# Alert attribution, alert %, delays


def _attribute_alert(
    alert: dict, persons: Sequence[GroundTruthPerson]
) -> List[GroundTruthPerson]:
    """Persons credited with one alert: bbox overlap, else nearest center."""
    frame_index = alert["frame_index"]
    present = [p for p in persons if p.entry_frame <= frame_index <= p.exit_frame]
    if not present:
        return []
    bbox = tuple(alert["bbox"])
    overlapping = [
        p for p in present if rect_iou(bbox, p.bbox_at(frame_index)) > 0.0
    ]
    if overlapping:
        return overlapping
    cx = (bbox[0] + bbox[2]) / 2.0
    cy = (bbox[1] + bbox[3]) / 2.0

    def center_distance(p: GroundTruthPerson) -> Tuple[float, str]:
        gx0, gy0, gx1, gy1 = p.bbox_at(frame_index)
        gx = (gx0 + gx1) / 2.0
        gy = (gy0 + gy1) / 2.0
        return ((gx - cx) ** 2 + (gy - cy) ** 2, p.person_id)

    return [min(present, key=center_distance)]


def _alerts_by_person(
    run: RunLog, clip: Clip
) -> Tuple[Dict[Tuple[str, str], List[dict]], List[Tuple[str, GroundTruthPerson]]]:
    """First pass shared by alert_percent and alert_delays.

    Returns (attributed alerts keyed by (run_node, person_id), roster of
    (run_node, person) pairs). With stream duplication each duplicated
    stream carries its own copy of every person.
    """
    _check_run_clip(run, clip)
    roster: List[Tuple[str, GroundTruthPerson]] = []
    attributed: Dict[Tuple[str, str], List[dict]] = {}
    for run_node, source in sorted(run.node_map.items()):
        persons = clip.persons_on(source)
        for person in persons:
            roster.append((run_node, person))
        node_alerts = [a for a in run.alerts() if a["node"] == run_node]
        for alert in node_alerts:
            for person in _attribute_alert(alert, persons):
                attributed.setdefault((run_node, person.person_id), []).append(alert)
    return attributed, roster


def alert_percent(run: RunLog, clip: Clip) -> float:
    """Share of ground-truth persons with at least one attributable alert."""
    attributed, roster = _alerts_by_person(run, clip)
    if not roster:
        return 100.0
    alerted = sum(
        1 for run_node, person in roster if (run_node, person.person_id) in attributed
    )
    return 100.0 * alerted / len(roster)


def first_alert_times(run: RunLog, clip: Clip) -> Dict[Tuple[str, str], float]:
    """First attributable alert timestamp per (run node, person id)."""
    attributed, _ = _alerts_by_person(run, clip)
    return {
        key: min(a["timestamp"] for a in alerts)
        for key, alerts in attributed.items()
    }


def false_alert_count(run: RunLog, clip: Clip) -> int:
    """Alert events whose bbox overlaps no ground-truth person on their frame."""
    _check_run_clip(run, clip)
    count = 0
    for run_node, source in sorted(run.node_map.items()):
        persons = clip.persons_on(source)
        for alert in run.alerts():
            if alert["node"] != run_node:
                continue
            frame_index = alert["frame_index"]
            bbox = tuple(alert["bbox"])
            hit = any(
                p.entry_frame <= frame_index <= p.exit_frame
                and rect_iou(bbox, p.bbox_at(frame_index)) > 0.0
                for p in persons
            )
            if not hit:
                count += 1
    return count


def alert_delays(
    run: RunLog, clip: Clip, acct: LatencyAccounting = LatencyAccounting()
) -> List[float]:
    """Compensated first-alert delay (ms) per alerted person.

    Unalerted persons contribute nothing. Negative compensated delays are
    reported via NegativeDelayWarning and returned as-is; histograms clamp
    them to zero.
    """
    attributed, roster = _alerts_by_person(run, clip)
    minimum_mesh: Dict[int, float] = {}
    if acct.include_mesh:
        for record in run.deliveries():
            latency = record["delivery_time"] - record["dispatch_time"]
            event_id = record["event_id"]
            if event_id not in minimum_mesh or latency < minimum_mesh[event_id]:
                minimum_mesh[event_id] = latency
    delays: List[float] = []
    for run_node, person in roster:
        alerts = attributed.get((run_node, person.person_id))
        if not alerts:
            continue
        first = min(alerts, key=lambda a: (a["timestamp"], a["event_id"]))
        source = run.node_map[run_node]
        entry_ts = clip.streams[source][person.entry_frame].timestamp
        raw = first["timestamp"] - entry_ts
        delay = acct.compensate(raw, run.capture)
        if acct.include_mesh:
            delay += minimum_mesh.get(first["event_id"], 0.0)
        if delay < 0:
            warnings.warn(
                f"person {person.person_id} on {run_node}: compensation drove the "
                f"delay to {delay:.1f} ms",
                NegativeDelayWarning,
            )
        delays.append(delay)
    return delays


def delay_histogram(
    delays: Sequence[float], bin_width: float = DEFAULT_BIN_WIDTH_MS
) -> Dict[int, int]:
    """Half-open bins [k*w, (k+1)*w); negative delays land in bin 0."""
    if bin_width <= 0:
        raise DomainError(f"bin_width must be positive, got {bin_width}")
    bins: Dict[int, int] = {}
    for delay in delays:
        k = max(0, math.floor(delay / bin_width))
        bins[k] = bins.get(k, 0) + 1
    return dict(sorted(bins.items()))


# ---------------------------------------------------------------------------
# Aggregation (the results-table shape: metric x dataset x mode)

AVG_ROW = "AVG"


@dataclass(frozen=True)
class ClipResult:
    """One (clip, mode) evaluation, the unit fed into aggregation."""

    dataset: str
    mode: str
    clip_id: str
    tp: int
    fp: int
    fn: int
    persons: int
    alerted: int
    delays: Tuple[float, ...]

    @classmethod
    def from_run(
        cls,
        run: RunLog,
        clip: Clip,
        dataset: str,
        iou_threshold: float = DEFAULT_MATCH_IOU,
        acct: LatencyAccounting = LatencyAccounting(),
    ) -> "ClipResult":
        tp, fp, fn = pr_counts(run, clip, iou_threshold)
        attributed, roster = _alerts_by_person(run, clip)
        alerted = sum(
            1 for run_node, p in roster if (run_node, p.person_id) in attributed
        )
        return cls(
            dataset=dataset,
            mode=run.config.get("mode", "Default"),
            clip_id=clip.clip_id,
            tp=tp,
            fp=fp,
            fn=fn,
            persons=len(roster),
            alerted=alerted,
            delays=tuple(alert_delays(run, clip, acct)),
        )


@dataclass(frozen=True)
class ReportCell:
    precision: float
    recall: float
    alert_percent: float
    delays: Tuple[float, ...]

    def histogram(self, bin_width: float = DEFAULT_BIN_WIDTH_MS) -> Dict[int, int]:
        return delay_histogram(self.delays, bin_width)

    def median_delay(self) -> Optional[float]:
        if not self.delays:
            return None
        ordered = sorted(self.delays)
        mid = len(ordered) // 2
        if len(ordered) % 2 == 1:
            return ordered[mid]
        return (ordered[mid - 1] + ordered[mid]) / 2.0

    def to_obj(self, bin_width: float = DEFAULT_BIN_WIDTH_MS) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "alert_percent": self.alert_percent,
            "delays": list(self.delays),
            "delay_histogram": {str(k): v for k, v in self.histogram(bin_width).items()},
        }


def dataset_cell(results: Sequence[ClipResult]) -> ReportCell:
    """Micro-average one (dataset, mode) cell over its clips' frames."""
    if not results:
        raise EmptyCell("a report cell needs at least one clip result")
    tp = sum(r.tp for r in results)
    fp = sum(r.fp for r in results)
    fn = sum(r.fn for r in results)
    precision, recall = precision_recall(tp, fp, fn)
    persons = sum(r.persons for r in results)
    alerted = sum(r.alerted for r in results)
    pct = 100.0 * alerted / persons if persons else 100.0
    delays: List[float] = []
    for r in results:
        delays.extend(r.delays)
    return ReportCell(
        precision=precision, recall=recall, alert_percent=pct, delays=tuple(delays)
    )


def average_row(cells: Sequence[ReportCell]) -> ReportCell:
    """Unweighted mean of dataset cells (delays concatenated)."""
    if not cells:
        raise EmptyCell("average row needs at least one dataset cell")
    n = len(cells)
    delays: List[float] = []
    for cell in cells:
        delays.extend(cell.delays)
    return ReportCell(
        precision=sum(c.precision for c in cells) / n,
        recall=sum(c.recall for c in cells) / n,
        alert_percent=sum(c.alert_percent for c in cells) / n,
        delays=tuple(delays),
    )


@dataclass(frozen=True)
class MetricsReport:
    datasets: Tuple[str, ...]
    modes: Tuple[str, ...]
    cells: Dict[Tuple[str, str], ReportCell]  # (dataset, mode) -> cell

    def cell(self, dataset: str, mode: str) -> ReportCell:
        return self.cells[(dataset, mode)]

    def to_obj(self, bin_width: float = DEFAULT_BIN_WIDTH_MS) -> dict:
        return {
            "datasets": list(self.datasets),
            "modes": list(self.modes),
            "cells": {
                f"{dataset}/{mode}": self.cells[(dataset, mode)].to_obj(bin_width)
                for dataset in (*self.datasets, AVG_ROW)
                for mode in self.modes
            },
            "conventions": {
                "precision_empty_denominator": 1.0,
                "recall_empty_denominator": 1.0,
                "dataset_aggregation": "micro over frames",
                "avg_row": "unweighted mean of dataset values",
            },
        }

    def render_text(self) -> str:
        """Aligned metric x dataset x mode table for standard output."""
        rows: List[str] = []
        name_width = max(
            [len(d) for d in (*self.datasets, AVG_ROW)] + [len("dataset")]
        )
        header = f"{'metric':<12} {'dataset':<{name_width}} " + " ".join(
            f"{m:>10}" for m in self.modes
        )
        rows.append(header)
        rows.append("-" * len(header))
        specs = [
            ("precision", lambda c: f"{c.precision:10.3f}"),
            ("recall", lambda c: f"{c.recall:10.3f}"),
            ("alert %", lambda c: f"{c.alert_percent:9.2f}%"),
            ("med delay", lambda c: (
                f"{c.median_delay():8.0f}ms" if c.median_delay() is not None else f"{'-':>10}"
            )),
        ]
        for metric, fmt in specs:
            for dataset in (*self.datasets, AVG_ROW):
                cells = [self.cells[(dataset, mode)] for mode in self.modes]
                rows.append(
                    f"{metric:<12} {dataset:<{name_width}} "
                    + " ".join(fmt(c) for c in cells)
                )
            rows.append("")
        return "\n".join(rows)


def aggregate_report(results: Sequence[ClipResult]) -> MetricsReport:
    """Group clip results into the full report matrix plus the AVG row.

    Every (dataset, mode) combination present in the input's dataset and
    mode sets must have at least one clip; missing combinations raise
    EmptyCell.
    """
    if not results:
        raise EmptyCell("no clip results to aggregate")
    datasets = tuple(sorted({r.dataset for r in results}))
    modes = tuple(sorted({r.mode for r in results}))
    cells: Dict[Tuple[str, str], ReportCell] = {}
    for dataset in datasets:
        for mode in modes:
            bucket = [r for r in results if r.dataset == dataset and r.mode == mode]
            if not bucket:
                raise EmptyCell(f"no clips for dataset {dataset!r} in mode {mode!r}")
            cells[(dataset, mode)] = dataset_cell(bucket)
    for mode in modes:
        cells[(AVG_ROW, mode)] = average_row([cells[(d, mode)] for d in datasets])
    return MetricsReport(datasets=datasets, modes=modes, cells=cells)

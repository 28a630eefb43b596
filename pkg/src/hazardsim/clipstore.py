"""Clip data model, bundle I/O and the image-quality gate.

A clip bundle is a directory:

    clip.json               header: clip_id, frame_rate, duration, nodes
    frames_<node_id>.jsonl  one frame record per line, per node
    ground_truth.jsonl      one ground-truth person per line

All serialization is canonical: fixed key order, compact separators, one
trailing newline per line, so save(load(bundle)) is byte-identical for
bundles produced by save_clip.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import InvariantViolation, MissingFile, SchemaViolation
from .schemas import validate_document

CLASSES = ("person", "light_vehicle", "heavy_vehicle", "demarcation")

Rect = Tuple[float, float, float, float]


def _check_bbox(bbox, where: str) -> Rect:
    if len(bbox) != 4:
        raise SchemaViolation(f"{where}: bbox must have 4 coordinates")
    x0, y0, x1, y1 = (float(v) for v in bbox)
    for v in (x0, y0, x1, y1):
        if not (0.0 <= v <= 1.0):
            raise SchemaViolation(f"{where}: bbox coordinate {v} outside [0, 1]")
    if not (x0 < x1 and y0 < y1):
        raise SchemaViolation(f"{where}: bbox must satisfy x_min < x_max and y_min < y_max")
    return (x0, y0, x1, y1)


@dataclass(frozen=True)
class Detection:
    """A single detector output on one frame."""

    cls: str
    bbox: Rect
    confidence: float

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise SchemaViolation(f"unknown detection class {self.cls!r}")
        object.__setattr__(self, "bbox", _check_bbox(self.bbox, "detection"))
        if not (0.0 <= self.confidence <= 1.0):
            raise SchemaViolation(f"detection confidence {self.confidence} outside [0, 1]")

    def to_obj(self) -> dict:
        return {"class": self.cls, "bbox": list(self.bbox), "confidence": self.confidence}

    @classmethod
    def from_obj(cls, obj: dict) -> "Detection":
        return cls(cls=obj["class"], bbox=tuple(obj["bbox"]), confidence=obj["confidence"])


@dataclass(frozen=True)
class FrameRecord:
    """One timestamped frame from one sensing node: detections + quality."""

    node_id: str
    frame_index: int
    timestamp: float  # ms since clip start
    quality: float
    detections: Tuple[Detection, ...] = ()

    def __post_init__(self):
        if self.frame_index < 0:
            raise SchemaViolation(f"frame_index {self.frame_index} is negative")
        if not (0.0 <= self.quality <= 1.0):
            raise SchemaViolation(f"frame quality {self.quality} outside [0, 1]")
        object.__setattr__(self, "detections", tuple(self.detections))

    def to_obj(self) -> dict:
        return {
            "node_id": self.node_id,
            "frame_index": self.frame_index,
            "timestamp": self.timestamp,
            "quality": self.quality,
            "detections": [d.to_obj() for d in self.detections],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "FrameRecord":
        return cls(
            node_id=obj["node_id"],
            frame_index=obj["frame_index"],
            timestamp=obj["timestamp"],
            quality=obj["quality"],
            detections=tuple(Detection.from_obj(d) for d in obj["detections"]),
        )


@dataclass(frozen=True)
class GroundTruthPerson:
    """A scripted person: one bbox per frame over [entry_frame, exit_frame]."""

    person_id: str
    node_id: str
    entry_frame: int
    exit_frame: int
    bboxes: Tuple[Rect, ...]

    def __post_init__(self):
        if self.entry_frame > self.exit_frame:
            raise SchemaViolation(
                f"person {self.person_id}: entry_frame {self.entry_frame} > exit_frame {self.exit_frame}"
            )
        boxes = tuple(_check_bbox(b, f"person {self.person_id}") for b in self.bboxes)
        object.__setattr__(self, "bboxes", boxes)
        expected = self.exit_frame - self.entry_frame + 1
        if len(boxes) != expected:
            raise SchemaViolation(
                f"person {self.person_id}: {len(boxes)} bboxes for a {expected}-frame interval"
            )

    def bbox_at(self, frame_index: int) -> Optional[Rect]:
        if self.entry_frame <= frame_index <= self.exit_frame:
            return self.bboxes[frame_index - self.entry_frame]
        return None

    def to_obj(self) -> dict:
        return {
            "person_id": self.person_id,
            "node_id": self.node_id,
            "entry_frame": self.entry_frame,
            "exit_frame": self.exit_frame,
            "bboxes": [list(b) for b in self.bboxes],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "GroundTruthPerson":
        return cls(
            person_id=obj["person_id"],
            node_id=obj["node_id"],
            entry_frame=obj["entry_frame"],
            exit_frame=obj["exit_frame"],
            bboxes=tuple(tuple(b) for b in obj["bboxes"]),
        )


@dataclass(frozen=True)
class QualityVerdict:
    """Outcome of the image-quality gate. Advisory only, never drops frames."""

    passed: bool
    advisory: Optional[str] = None

    def __post_init__(self):
        if self.passed and self.advisory is not None:
            raise SchemaViolation("passing verdicts carry no advisory")
        if not self.passed and self.advisory is None:
            raise SchemaViolation("failing verdicts must carry an advisory")


@dataclass(frozen=True)
class Clip:
    """An immutable multi-node clip with ground truth, shareable across threads."""

    clip_id: str
    frame_rate: float
    duration: float
    streams: Dict[str, Tuple[FrameRecord, ...]]
    ground_truth: Tuple[GroundTruthPerson, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "streams", {n: tuple(frames) for n, frames in self.streams.items()}
        )
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        self._validate()

    def _validate(self):
        if not self.streams:
            raise InvariantViolation(f"clip {self.clip_id}: no node streams")
        counts = {n: len(fr) for n, fr in self.streams.items()}
        if len(set(counts.values())) != 1:
            raise InvariantViolation(
                f"clip {self.clip_id}: node streams disagree on frame count: {counts}"
            )
        n_frames = next(iter(counts.values()))
        if n_frames == 0:
            raise InvariantViolation(f"clip {self.clip_id}: empty streams")
        for node, frames in self.streams.items():
            last_ts = -math.inf
            for i, fr in enumerate(frames):
                if fr.node_id != node:
                    raise InvariantViolation(
                        f"clip {self.clip_id}: frame in stream {node!r} claims node {fr.node_id!r}"
                    )
                if fr.frame_index != i:
                    raise InvariantViolation(
                        f"clip {self.clip_id}: node {node!r} has frame_index {fr.frame_index} "
                        f"at position {i} (gap or reorder)"
                    )
                if fr.timestamp <= last_ts:
                    raise InvariantViolation(
                        f"clip {self.clip_id}: node {node!r} timestamps not strictly increasing "
                        f"at frame {i}"
                    )
                last_ts = fr.timestamp
        expected = n_frames / self.frame_rate
        if abs(self.duration - expected) > 1.0 / self.frame_rate + 1e-9:
            raise InvariantViolation(
                f"clip {self.clip_id}: duration {self.duration}s inconsistent with "
                f"{n_frames} frames @ {self.frame_rate} fps"
            )
        for person in self.ground_truth:
            if person.node_id not in self.streams:
                raise InvariantViolation(
                    f"clip {self.clip_id}: person {person.person_id} references unknown "
                    f"node {person.node_id!r}"
                )
            if person.exit_frame >= n_frames:
                raise InvariantViolation(
                    f"clip {self.clip_id}: person {person.person_id} exits at frame "
                    f"{person.exit_frame}, clip has {n_frames}"
                )

    @property
    def frame_count(self) -> int:
        return len(next(iter(self.streams.values())))

    @property
    def nodes(self) -> List[str]:
        return sorted(self.streams)

    def persons_on(self, node_id: str) -> List[GroundTruthPerson]:
        return [p for p in self.ground_truth if p.node_id == node_id]


def quality_gate(frame: FrameRecord, min_quality: float) -> QualityVerdict:
    """Advisory image-quality check; a failing frame still flows downstream."""
    if not (0.0 <= min_quality <= 1.0):
        raise SchemaViolation(f"min_quality {min_quality} outside [0, 1]")
    if frame.quality >= min_quality:
        return QualityVerdict(passed=True)
    return QualityVerdict(
        passed=False,
        advisory=(
            f"node {frame.node_id} frame {frame.frame_index}: quality "
            f"{frame.quality:.3f} below operating threshold {min_quality:.3f}"
        ),
    )


# ---------------------------------------------------------------------------
# Bundle I/O


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"


def _read_json(path: Path, schema: str, context: str):
    if not path.exists():
        raise MissingFile(f"{context}: {path} does not exist")
    try:
        parsed = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{context}: {path.name} is not valid JSON: {exc}") from exc
    validate_document(schema, parsed, context=path.name)
    return parsed


def _read_jsonl(path: Path, schema: str, context: str):
    if not path.exists():
        raise MissingFile(f"{context}: {path} does not exist")
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                parsed = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(
                    f"{context}: {path.name}:{lineno} is not valid JSON: {exc}"
                ) from exc
            validate_document(schema, parsed, context=f"{path.name}:{lineno}")
            out.append(parsed)
    return out


def load_clip(path) -> Clip:
    """Load and fully validate a clip bundle directory."""
    root = Path(path)
    if not root.is_dir():
        raise MissingFile(f"clip bundle {root} is not a directory")
    header = _read_json(root / "clip.json", "clip_header", "clip header")
    streams: Dict[str, Tuple[FrameRecord, ...]] = {}
    for node in header["nodes"]:
        lines = _read_jsonl(root / f"frames_{node}.jsonl", "frame_record", f"node {node}")
        streams[node] = tuple(FrameRecord.from_obj(obj) for obj in lines)
    gt_lines = _read_jsonl(root / "ground_truth.jsonl", "ground_truth", "ground truth")
    ground_truth = tuple(GroundTruthPerson.from_obj(obj) for obj in gt_lines)
    return Clip(
        clip_id=header["clip_id"],
        frame_rate=header["frame_rate"],
        duration=header["duration"],
        streams=streams,
        ground_truth=ground_truth,
    )


def save_clip(clip: Clip, path) -> Path:
    """Write a clip bundle in canonical form; returns the bundle directory."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    header = {
        "clip_id": clip.clip_id,
        "frame_rate": clip.frame_rate,
        "duration": clip.duration,
        "nodes": clip.nodes,
    }
    (root / "clip.json").write_text(_dump_line(header), encoding="utf-8")
    for node in clip.nodes:
        with (root / f"frames_{node}.jsonl").open("w", encoding="utf-8") as fh:
            for frame in clip.streams[node]:
                fh.write(_dump_line(frame.to_obj()))
    gt_sorted = sorted(
        clip.ground_truth, key=lambda p: (p.node_id, p.entry_frame, p.person_id)
    )
    with (root / "ground_truth.jsonl").open("w", encoding="utf-8") as fh:
        for person in gt_sorted:
            fh.write(_dump_line(person.to_obj()))
    return root

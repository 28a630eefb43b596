"""Seeded synthetic clip generation from scripted scenarios.

A scenario scripts person/distractor trajectories and a detector-noise model
(miss rate, confidence jitter, bbox-center jitter, spurious detections).
Ground truth is the exact scripted geometry; noise applies only to emitted
detections. Generation is a pure function of (scenario, seed).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .clipstore import (
    CLASSES,
    Clip,
    Detection,
    FrameRecord,
    GroundTruthPerson,
    Rect,
)
from .errors import InvalidScenario, MissingFile, SchemaViolation
from .schemas import validate_document


@dataclass(frozen=True)
class ActorSpec:
    """A scripted bbox trajectory: waypoints traversed over [enter, exit]."""

    node_id: str
    cls: str
    enter: float  # seconds
    exit: float
    path: Tuple[Tuple[float, float], ...]  # bbox-center waypoints
    size: Tuple[float, float]  # (width, height)
    base_confidence: float = 0.8
    detect_rate: float = 1.0
    person_id: Optional[str] = None  # set only for ground-truth persons

    def bbox_center(self, u: float) -> Tuple[float, float]:
        """Interpolate the center at parametric position u in [0, 1]."""
        pts = self.path
        if len(pts) == 1:
            return pts[0]
        scaled = u * (len(pts) - 1)
        k = min(int(scaled), len(pts) - 2)
        local = scaled - k
        ax, ay = pts[k]
        bx, by = pts[k + 1]
        return (ax + (bx - ax) * local, ay + (by - ay) * local)

    def bbox(self, u: float) -> Rect:
        cx, cy = self.bbox_center(u)
        w, h = self.size
        return (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


@dataclass(frozen=True)
class NoiseSpec:
    miss_rate: float = 0.0
    confidence_jitter: float = 0.0
    bbox_jitter: float = 0.0
    spurious_rate: float = 0.0
    spurious_confidence: Tuple[float, float] = (0.3, 0.6)
    spurious_class: str = "person"


@dataclass(frozen=True)
class QualityDip:
    start: float
    end: float
    value: float


@dataclass(frozen=True)
class QualitySpec:
    base: float = 1.0
    dips: Tuple[QualityDip, ...] = ()

    def at(self, t_seconds: float) -> float:
        for dip in self.dips:
            if dip.start <= t_seconds < dip.end:
                return dip.value
        return self.base


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    frame_rate: float
    duration: float  # seconds
    nodes: Tuple[str, ...]
    persons: Tuple[ActorSpec, ...] = ()
    distractors: Tuple[ActorSpec, ...] = ()
    noise: NoiseSpec = NoiseSpec()
    quality: QualitySpec = QualitySpec()

    def validate(self) -> None:
        if self.duration <= 0:
            raise InvalidScenario(f"{self.scenario_id}: non-positive duration")
        if self.frame_rate <= 0:
            raise InvalidScenario(f"{self.scenario_id}: non-positive frame rate")
        if not self.nodes:
            raise InvalidScenario(f"{self.scenario_id}: no nodes")
        seen_persons = set()
        for actor in self.persons + self.distractors:
            label = actor.person_id or f"{actor.cls}@{actor.node_id}"
            if actor.node_id not in self.nodes:
                raise InvalidScenario(f"{self.scenario_id}: {label} on unknown node {actor.node_id!r}")
            if actor.cls not in CLASSES:
                raise InvalidScenario(f"{self.scenario_id}: {label} has unknown class {actor.cls!r}")
            if not (0 <= actor.enter < actor.exit <= self.duration):
                raise InvalidScenario(
                    f"{self.scenario_id}: {label} presence [{actor.enter}, {actor.exit}] "
                    f"invalid for a {self.duration}s clip"
                )
            w, h = actor.size
            if w <= 0 or h <= 0:
                raise InvalidScenario(f"{self.scenario_id}: {label} has non-positive size")
            for cx, cy in actor.path:
                if not (0 <= cx - w / 2 and cx + w / 2 <= 1 and 0 <= cy - h / 2 and cy + h / 2 <= 1):
                    raise InvalidScenario(
                        f"{self.scenario_id}: {label} trajectory leaves the unit frame"
                    )
        for person in self.persons:
            if person.person_id is None:
                raise InvalidScenario(f"{self.scenario_id}: ground-truth person without person_id")
            key = (person.person_id, person.node_id)
            if key in seen_persons:
                raise InvalidScenario(f"{self.scenario_id}: duplicate person {key}")
            seen_persons.add(key)


def _actor_from_obj(obj: dict, *, person: bool) -> ActorSpec:
    return ActorSpec(
        node_id=obj["node_id"],
        cls="person" if person else obj["class"],
        enter=float(obj["enter"]),
        exit=float(obj["exit"]),
        path=tuple((float(x), float(y)) for x, y in obj["path"]),
        size=(float(obj["size"][0]), float(obj["size"][1])),
        base_confidence=float(obj.get("base_confidence", 0.8)),
        detect_rate=float(obj.get("detect_rate", 1.0)),
        person_id=obj["person_id"] if person else None,
    )


def scenario_from_obj(obj: dict) -> ScenarioSpec:
    """Build a ScenarioSpec from a parsed scenario document."""
    validate_document("scenario", obj, context="scenario")
    noise_obj = obj.get("noise", {})
    quality_obj = obj.get("quality", {})
    spec = ScenarioSpec(
        scenario_id=obj["scenario_id"],
        frame_rate=float(obj["frame_rate"]),
        duration=float(obj["duration"]),
        nodes=tuple(obj["nodes"]),
        persons=tuple(_actor_from_obj(p, person=True) for p in obj.get("persons", ())),
        distractors=tuple(_actor_from_obj(d, person=False) for d in obj.get("distractors", ())),
        noise=NoiseSpec(
            miss_rate=float(noise_obj.get("miss_rate", 0.0)),
            confidence_jitter=float(noise_obj.get("confidence_jitter", 0.0)),
            bbox_jitter=float(noise_obj.get("bbox_jitter", 0.0)),
            spurious_rate=float(noise_obj.get("spurious_rate", 0.0)),
            spurious_confidence=tuple(noise_obj.get("spurious_confidence", (0.3, 0.6))),
            spurious_class=noise_obj.get("spurious_class", "person"),
        ),
        quality=QualitySpec(
            base=float(quality_obj.get("base", 1.0)),
            dips=tuple(
                QualityDip(float(d["start"]), float(d["end"]), float(d["value"]))
                for d in quality_obj.get("dips", ())
            ),
        ),
    )
    spec.validate()
    return spec


def load_scenario(path) -> ScenarioSpec:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"scenario {p} does not exist")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"scenario {p.name} is not valid JSON: {exc}") from exc
    return scenario_from_obj(obj)


def _frame_span(actor: ActorSpec, frame_rate: float, n_frames: int) -> Tuple[int, int]:
    entry = math.ceil(actor.enter * frame_rate - 1e-9)
    exit_ = min(math.floor(actor.exit * frame_rate + 1e-9), n_frames - 1)
    return entry, exit_


def _presence_u(actor: ActorSpec, entry: int, exit_: int, frame: int) -> float:
    if exit_ == entry:
        return 0.0
    return (frame - entry) / (exit_ - entry)


def _clamped_center_jitter(rng: random.Random, bbox: Rect, jitter: float) -> Rect:
    """Displace the bbox center by uniform(-j, +j) per axis, kept in-frame."""
    x0, y0, x1, y1 = bbox
    w = x1 - x0
    h = y1 - y0
    cx = (x0 + x1) / 2.0 + rng.uniform(-jitter, jitter)
    cy = (y0 + y1) / 2.0 + rng.uniform(-jitter, jitter)
    cx = min(max(cx, w / 2.0), 1.0 - w / 2.0)
    cy = min(max(cy, h / 2.0), 1.0 - h / 2.0)
    return (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def synth_clip(scenario: ScenarioSpec, seed: int) -> Clip:
    """Generate a clip deterministically from (scenario, seed)."""
    scenario.validate()
    rng = random.Random(seed)
    n_frames = max(1, round(scenario.duration * scenario.frame_rate))
    noise = scenario.noise
    nodes = sorted(scenario.nodes)

    spans: Dict[int, Tuple[int, int]] = {}
    actors = list(scenario.persons) + list(scenario.distractors)
    for idx, actor in enumerate(actors):
        entry, exit_ = _frame_span(actor, scenario.frame_rate, n_frames)
        if entry > exit_:
            raise InvalidScenario(
                f"{scenario.scenario_id}: presence of {actor.person_id or actor.cls} "
                f"shorter than one frame"
            )
        spans[idx] = (entry, exit_)

    per_node_actors: Dict[str, List[int]] = {node: [] for node in nodes}
    for idx, actor in enumerate(actors):
        per_node_actors[actor.node_id].append(idx)

    streams: Dict[str, List[FrameRecord]] = {node: [] for node in nodes}
    for i in range(n_frames):
        t_seconds = i / scenario.frame_rate
        timestamp = i * 1000.0 / scenario.frame_rate
        quality = scenario.quality.at(t_seconds)
        for node in nodes:
            detections: List[Detection] = []
            for idx in per_node_actors[node]:
                actor = actors[idx]
                entry, exit_ = spans[idx]
                if not (entry <= i <= exit_):
                    continue
                is_person = actor.person_id is not None
                # Persons answer to the global miss rate, distractors to
                # their own detect rate; each draw consumes the stream once.
                if is_person:
                    detected = rng.random() >= noise.miss_rate
                else:
                    detected = rng.random() < actor.detect_rate
                if not detected:
                    continue
                conf = actor.base_confidence
                if noise.confidence_jitter > 0:
                    conf += rng.uniform(-noise.confidence_jitter, noise.confidence_jitter)
                conf = min(max(conf, 0.0), 1.0)
                bbox = actor.bbox(_presence_u(actor, entry, exit_, i))
                if noise.bbox_jitter > 0:
                    bbox = _clamped_center_jitter(rng, bbox, noise.bbox_jitter)
                detections.append(Detection(cls=actor.cls, bbox=bbox, confidence=conf))
            if noise.spurious_rate > 0 and rng.random() < noise.spurious_rate:
                w = rng.uniform(0.02, 0.10)
                h = rng.uniform(0.04, 0.15)
                cx = rng.uniform(w / 2.0, 1.0 - w / 2.0)
                cy = rng.uniform(h / 2.0, 1.0 - h / 2.0)
                lo, hi = noise.spurious_confidence
                detections.append(
                    Detection(
                        cls=noise.spurious_class,
                        bbox=(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0),
                        confidence=rng.uniform(lo, hi),
                    )
                )
            streams[node].append(
                FrameRecord(
                    node_id=node,
                    frame_index=i,
                    timestamp=timestamp,
                    quality=quality,
                    detections=tuple(detections),
                )
            )

    ground_truth: List[GroundTruthPerson] = []
    for idx, actor in enumerate(scenario.persons):
        entry, exit_ = spans[idx]
        boxes = tuple(
            actor.bbox(_presence_u(actor, entry, exit_, f)) for f in range(entry, exit_ + 1)
        )
        ground_truth.append(
            GroundTruthPerson(
                person_id=actor.person_id,
                node_id=actor.node_id,
                entry_frame=entry,
                exit_frame=exit_,
                bboxes=boxes,
            )
        )
    ground_truth.sort(key=lambda p: (p.node_id, p.entry_frame, p.person_id))

    return Clip(
        clip_id=scenario.scenario_id,
        frame_rate=scenario.frame_rate,
        duration=n_frames / scenario.frame_rate,
        streams={node: tuple(frames) for node, frames in streams.items()},
        ground_truth=tuple(ground_truth),
    )

"""Turns confirmed tracks into alert events.

Four filters in order: track confirmed, class selected, smoothed confidence
at or above the mode threshold, bbox intersecting the node's zone (when one
is drawn). A per-device debounce then masks anything falling inside the
2000 ms pulse window of the previous alert to that device.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .clipstore import CLASSES, Rect
from .errors import DomainError, InvariantViolation, ValidationError
from .geometry import polygon_is_simple, rect_polygon_intersect
from .schemas import validate_document
from .tracker import CONFIRMED, Track, TrackerParams

MODES = ("Default", "Reactive", "Certain")

# Frozen preset tuples, tuned on the seeded synthetic corpus so that the
# documented mode orderings hold (Reactive trades precision for delay,
# Certain the reverse, Default between them).
MODE_PRESETS: Dict[str, Tuple[float, TrackerParams]] = {
    "Reactive": (
        0.30,
        TrackerParams(
            iou_match_threshold=0.3,
            confidence_smoothing_alpha=0.8,
            confirm_hits=1,
            miss_decay=0.85,
            expire_after_misses=5,
        ),
    ),
    "Default": (
        0.50,
        TrackerParams(
            iou_match_threshold=0.3,
            confidence_smoothing_alpha=0.6,
            confirm_hits=2,
            miss_decay=0.85,
            expire_after_misses=5,
        ),
    ),
    "Certain": (
        0.70,
        TrackerParams(
            iou_match_threshold=0.3,
            confidence_smoothing_alpha=0.4,
            confirm_hits=4,
            miss_decay=0.85,
            expire_after_misses=5,
        ),
    ),
}

DEBOUNCE_WINDOW_MS = 2000.0


def mode_preset(mode: str) -> Tuple[float, TrackerParams]:
    """The frozen (alert threshold, tracker params) tuple for a mode."""
    if mode not in MODE_PRESETS:
        raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
    return MODE_PRESETS[mode]


@dataclass(frozen=True)
class Zone:
    """A simple polygon restricting alerts to detections that intersect it."""

    polygon: Tuple[Tuple[float, float], ...]
    semantics: str = "include"

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.polygon)
        object.__setattr__(self, "polygon", pts)
        if len(pts) < 3:
            raise ValidationError(f"zone polygon needs >= 3 vertices, got {len(pts)}")
        for x, y in pts:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise ValidationError(f"zone vertex ({x}, {y}) outside the unit frame")
        if not polygon_is_simple(pts):
            raise ValidationError("zone polygon is self-intersecting")
        if self.semantics != "include":
            raise ValidationError(f"unsupported zone semantics {self.semantics!r}")

    def to_obj(self) -> dict:
        return {"polygon": [list(p) for p in self.polygon], "semantics": self.semantics}

    @classmethod
    def from_obj(cls, obj: dict) -> "Zone":
        return cls(
            polygon=tuple(tuple(p) for p in obj["polygon"]),
            semantics=obj.get("semantics", "include"),
        )


def zone_intersects(bbox: Rect, zone: Zone) -> bool:
    """Closed-set test: a bbox touching the zone boundary counts as inside."""
    return rect_polygon_intersect(bbox, zone.polygon)


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "Default"
    alert_confidence_threshold: float = MODE_PRESETS["Default"][0]
    tracker_params: TrackerParams = MODE_PRESETS["Default"][1]
    class_mask: FrozenSet[str] = frozenset({"person"})
    zones: Dict[str, Optional[Zone]] = field(default_factory=dict)
    min_quality: float = 0.5
    debounce_window_ms: float = DEBOUNCE_WINDOW_MS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if not (0.0 <= self.alert_confidence_threshold <= 1.0):
            raise ValidationError("alert_confidence_threshold outside [0, 1]")
        mask = frozenset(self.class_mask)
        if not mask:
            raise ValidationError("class_mask must not be empty")
        unknown = mask - set(CLASSES)
        if unknown:
            raise ValidationError(f"unknown classes in class_mask: {sorted(unknown)}")
        object.__setattr__(self, "class_mask", mask)
        if not (0.0 <= self.min_quality <= 1.0):
            raise ValidationError("min_quality outside [0, 1]")
        if self.debounce_window_ms <= 0:
            raise ValidationError("debounce_window_ms must be positive")
        object.__setattr__(self, "zones", dict(self.zones))

    def with_mode(self, mode: str) -> "PipelineConfig":
        """Apply a mode preset; overwrites the threshold and tracker params."""
        threshold, params = mode_preset(mode)
        return replace(
            self, mode=mode, alert_confidence_threshold=threshold, tracker_params=params
        )

    def to_obj(self) -> dict:
        return {
            "mode": self.mode,
            "alert_confidence_threshold": self.alert_confidence_threshold,
            "tracker": self.tracker_params.to_obj(),
            "class_mask": sorted(self.class_mask),
            "zones": {
                node: (zone.to_obj() if zone is not None else None)
                for node, zone in sorted(self.zones.items())
            },
            "min_quality": self.min_quality,
            "debounce_window_ms": self.debounce_window_ms,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "PipelineConfig":
        """Build from a config document.

        A present ``mode`` applies its preset first; explicit threshold or
        tracker fields then override individual values.
        """
        validate_document("config", obj, context="config")
        config = cls()
        if "mode" in obj:
            config = config.with_mode(obj["mode"])
        threshold = obj.get("alert_confidence_threshold", config.alert_confidence_threshold)
        tracker_obj = config.tracker_params.to_obj()
        tracker_obj.update(obj.get("tracker", {}))
        zones: Dict[str, Optional[Zone]] = {}
        for node, zone_obj in obj.get("zones", {}).items():
            zones[node] = Zone.from_obj(zone_obj) if zone_obj is not None else None
        return cls(
            mode=config.mode,
            alert_confidence_threshold=threshold,
            tracker_params=TrackerParams.from_obj(tracker_obj),
            class_mask=frozenset(obj.get("class_mask", ("person",))),
            zones=zones,
            min_quality=obj.get("min_quality", 0.5),
            debounce_window_ms=obj.get("debounce_window_ms", DEBOUNCE_WINDOW_MS),
        )


@dataclass(frozen=True)
class AlertCandidate:
    """A track that cleared every alert filter on one frame."""

    node_id: str
    track_id: int
    cls: str
    confidence: float
    bbox: Rect
    timestamp: float

    def to_obj(self) -> dict:
        return {
            "track_id": self.track_id,
            "class": self.cls,
            "confidence": self.confidence,
            "bbox": list(self.bbox),
        }


@dataclass(frozen=True)
class AlertEvent:
    event_id: int
    timestamp: float
    node_id: str
    track_id: int
    cls: str
    confidence_at_alert: float


def evaluate_frame(
    live_tracks: Sequence[Track], config: PipelineConfig, now: float
) -> List[AlertCandidate]:
    """Filter one frame's post-update tracks down to alert candidates.

    Candidates are ordered by track_id. A failing quality verdict upstream
    does not suppress candidates; the gate is advisory only.
    """
    candidates: List[AlertCandidate] = []
    for track in sorted(live_tracks, key=lambda t: t.track_id):
        if track.state != CONFIRMED:
            continue
        if track.cls not in config.class_mask:
            continue
        if track.smoothed_confidence < config.alert_confidence_threshold:
            continue
        zone = config.zones.get(track.node_id)
        if zone is not None and not zone_intersects(track.last_bbox, zone):
            continue
        candidates.append(
            AlertCandidate(
                node_id=track.node_id,
                track_id=track.track_id,
                cls=track.cls,
                confidence=track.smoothed_confidence,
                bbox=track.last_bbox,
                timestamp=now,
            )
        )
    return candidates


class AlertLedger:
    """Last-alert bookkeeping for the per-device debounce.

    The delivery decision is keyed per device only: one pulse masks all
    further alerts to that device for the window. Per-(device, track) times
    are kept as diagnostics.
    """

    def __init__(self):
        self.last_by_device: Dict[str, float] = {}
        self.last_by_device_track: Dict[Tuple[str, Tuple[str, int]], float] = {}
        self.next_event_id = 1

    def _touch(self, device_id: str, track_key, now: float) -> None:
        for mapping, key in (
            (self.last_by_device, device_id),
            (self.last_by_device_track, (device_id, track_key)),
        ):
            previous = mapping.get(key)
            if previous is not None and now < previous:
                raise InvariantViolation(
                    f"ledger timestamp went backwards for {key!r}: {previous} -> {now}"
                )
            mapping[key] = now


def debounce(
    candidate: AlertCandidate,
    ledger: AlertLedger,
    targets: Sequence[str],
    now: float,
    window: float = DEBOUNCE_WINDOW_MS,
) -> List[Tuple[str, AlertEvent]]:
    """Deliver a candidate to every device whose pulse window has elapsed.

    Returns (device_id, event) pairs sharing one AlertEvent; an entirely
    suppressed candidate creates no event and leaves the ledger untouched.
    """
    if window <= 0:
        raise DomainError(f"debounce window must be positive, got {window}")
    accepted = [
        device_id
        for device_id in targets
        if now - ledger.last_by_device.get(device_id, float("-inf")) >= window
    ]
    if not accepted:
        return []
    event = AlertEvent(
        event_id=ledger.next_event_id,
        timestamp=now,
        node_id=candidate.node_id,
        track_id=candidate.track_id,
        cls=candidate.cls,
        confidence_at_alert=candidate.confidence,
    )
    ledger.next_event_id += 1
    track_key = (candidate.node_id, candidate.track_id)
    for device_id in accepted:
        ledger._touch(device_id, track_key, now)
    return [(device_id, event) for device_id in accepted]

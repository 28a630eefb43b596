"""Run orchestration: streams a clip through the pipeline on a simulated or
wall clock, duplicates streams to emulate extra sensing nodes, owns the live
configuration, and fans events out to subscribers.

One run at a time. A single writer appends every record to the run log (and
to the event broker) in (timestamp, node, track) order, so two runs of the
same spec serialize byte-identically under the simulated clock.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .alertgate import (
    AlertLedger,
    PipelineConfig,
    debounce,
    evaluate_frame,
)
from .alertnet import MeshTopology, default_topology, dispatch
from .clipstore import Clip, FrameRecord, load_clip, quality_gate
from .errors import (
    BufferOverrun,
    ClipLoadError,
    HazardSimError,
    RunActive,
    TopologyUnreachable,
    ValidationError,
)
from .evalharness import CAPTURE_SIMULATED, RunLog
from .schemas import validate_document
from .tracker import TrackerState, update_tracks

CLOCK_SIMULATED = "simulated"
CLOCK_REALTIME = "realtime"


@dataclass(frozen=True)
class RunSpec:
    """Everything one replay run depends on."""

    clip: Union[str, Path, Clip]
    config: PipelineConfig = PipelineConfig()
    topology: MeshTopology = field(default_factory=default_topology)
    clock_mode: str = CLOCK_SIMULATED
    stream_duplication: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.clock_mode not in (CLOCK_SIMULATED, CLOCK_REALTIME):
            raise ValidationError(f"unknown clock mode {self.clock_mode!r}")
        if self.stream_duplication < 1:
            raise ValidationError("stream_duplication must be >= 1")


@dataclass(frozen=True)
class ControlMessage:
    """One request on the control API."""

    kind: str
    payload: dict
    request_id: Union[str, int]

    def __post_init__(self):
        validate_document(
            "control",
            {"kind": self.kind, "request_id": self.request_id, "payload": self.payload},
            context="control message",
        )


def apply_config(current: PipelineConfig, change: ControlMessage) -> PipelineConfig:
    """Produce the next complete config snapshot from one control message.

    set_mode expands its preset (overwriting threshold and tracker params);
    set_config merges slider values into the snapshot; set_zone replaces or
    clears one node's polygon. During a run the new snapshot takes effect at
    the next frame boundary, never mid-frame.
    """
    payload = change.payload
    try:
        if change.kind == "set_mode":
            return current.with_mode(payload["mode"])
        if change.kind == "set_zone":
            node_id = payload["node_id"]
            document = current.to_obj()
            document["zones"] = dict(document["zones"])
            document["zones"][node_id] = payload.get("zone")
            return PipelineConfig.from_obj(document)
        if change.kind == "set_config":
            document = current.to_obj()
            tracker_obj = dict(document["tracker"])
            tracker_obj.update(payload.get("tracker", {}))
            for key in (
                "mode",
                "alert_confidence_threshold",
                "class_mask",
                "min_quality",
                "debounce_window_ms",
            ):
                if key in payload:
                    document[key] = payload[key]
            document["tracker"] = tracker_obj
            if "zones" in payload:
                document["zones"] = payload["zones"]
            return PipelineConfig.from_obj(document)
    except KeyError as exc:
        raise ValidationError(f"{change.kind}: missing payload field {exc}") from exc
    except HazardSimError:
        raise
    raise ValidationError(f"{change.kind!r} does not change configuration")


# ---------------------------------------------------------------------------
# Event broker


_OVERRUN = object()


class Subscription:
    """A bounded, ordered view of the run's event stream.

    Iterating yields event records; when the producer overruns the buffer
    the subscription is poisoned and raises BufferOverrun.
    """

    def __init__(self, broker: "EventBroker", kinds: Optional[frozenset]):
        self._queue: "queue.Queue" = queue.Queue(maxsize=broker.buffer_size)
        self._kinds = kinds
        self._broker = broker
        self._closed = False

    def _offer(self, record: dict) -> bool:
        """Enqueue one record; returns False when this consumer overran."""
        if self._closed:
            return False
        if self._kinds is not None and record.get("record") not in self._kinds:
            return True
        try:
            self._queue.put_nowait(record)
            return True
        except queue.Full:
            self._closed = True
            # Drain one slot so the overrun marker always fits.
            try:
                self._queue.get_nowait()
            except queue.Empty:
                pass
            self._queue.put_nowait(_OVERRUN)
            return False

    def get(self, timeout: Optional[float] = None) -> dict:
        item = self._queue.get(timeout=timeout)
        if item is _OVERRUN:
            raise BufferOverrun(
                f"subscriber fell behind the {self._broker.buffer_size}-event buffer"
            )
        return item

    def close(self) -> None:
        self._closed = True
        self._broker.unsubscribe(self)

    def __iter__(self):
        while True:
            yield self.get()


class EventBroker:
    """Single-writer fan-out of run records with monotonic sequence numbers."""

    def __init__(self, buffer_size: int = 1024):
        self.buffer_size = buffer_size
        self._subscribers: List[Subscription] = []
        self._lock = threading.Lock()
        self._seq = 0

    def subscribe(self, kinds: Optional[Sequence[str]] = None) -> Subscription:
        sub = Subscription(self, frozenset(kinds) if kinds is not None else None)
        with self._lock:
            self._subscribers.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subscribers:
                self._subscribers.remove(sub)

    def publish(self, record: dict) -> dict:
        with self._lock:
            stamped = dict(record)
            stamped["seq"] = self._seq
            self._seq += 1
            self._subscribers = [
                sub for sub in self._subscribers if sub._offer(stamped)
            ]
        return stamped


def subscribe_events(
    broker: EventBroker, kinds: Optional[Sequence[str]] = None
) -> Subscription:
    """Attach an ordered, bounded-buffer consumer to a run's event stream."""
    return broker.subscribe(kinds)


# ---------------------------------------------------------------------------
# Replay


def _run_node_ids(source_nodes: Sequence[str], duplication: int) -> Dict[str, str]:
    """run node id -> source node id, stable ordering."""
    node_map: Dict[str, str] = {}
    for source in sorted(source_nodes):
        if duplication == 1:
            node_map[source] = source
        else:
            for k in range(duplication):
                node_map[f"{source}#{k}"] = source
    return node_map


class _RunState:
    """Mutable state shared between a running replay and its controller."""

    def __init__(self, config: PipelineConfig):
        self._lock = threading.Lock()
        self._config = config
        self._version = 0
        self.stop_requested = threading.Event()

    def config_snapshot(self) -> Tuple[int, PipelineConfig]:
        with self._lock:
            return self._version, self._config

    def update_config(self, config: PipelineConfig) -> int:
        with self._lock:
            self._version += 1
            self._config = config
            return self._version


def run_replay(
    spec: RunSpec,
    *,
    run_state: Optional[_RunState] = None,
    on_event: Optional[Callable[[dict], None]] = None,
) -> RunLog:
    """Replay one clip through the full pipeline and return its run log.

    Frames are fed per node in timestamp order through the quality gate,
    tracker, alert filters, debounce and mesh dispatch. With duplication n,
    each source stream runs under n distinct node ids with independent
    tracker states. Deterministic (byte-identical logs) under the simulated
    clock.
    """
    if isinstance(spec.clip, Clip):
        clip = spec.clip
    else:
        try:
            clip = load_clip(spec.clip)
        except HazardSimError as exc:
            raise ClipLoadError(f"cannot load clip {spec.clip}: {exc}") from exc
    if not spec.topology.is_connected():
        raise TopologyUnreachable("run topology is not fully connected")

    state = run_state if run_state is not None else _RunState(spec.config)
    node_map = _run_node_ids(clip.nodes, spec.stream_duplication)
    run_nodes = sorted(node_map)
    targets = spec.topology.device_ids

    start_version, start_config = state.config_snapshot()
    header = {
        "record": "header",
        "clip_id": clip.clip_id,
        "frame_rate": clip.frame_rate,
        "clock": spec.clock_mode,
        "capture": CAPTURE_SIMULATED,
        "seed": spec.seed,
        "duplication": spec.stream_duplication,
        "node_map": node_map,
        "config": start_config.to_obj(),
        "topology": spec.topology.to_obj(),
    }
    records: List[dict] = []

    def emit(record: dict) -> None:
        records.append(record)
        if on_event is not None:
            on_event(record)

    tracker_state = TrackerState()
    ledger = AlertLedger()
    last_version = start_version
    aborted = False
    alert_count = 0
    frames_done = 0
    wall_start = time.perf_counter()

    for frame_index in range(clip.frame_count):
        if state.stop_requested.is_set():
            aborted = True
            break
        version, config = state.config_snapshot()
        if version != last_version:
            first_source = clip.nodes[0]
            emit(
                {
                    "record": "config",
                    "timestamp": clip.streams[first_source][frame_index].timestamp,
                    "version": version,
                    "config": config.to_obj(),
                }
            )
            last_version = version
        if spec.clock_mode == CLOCK_REALTIME:
            target_wall = wall_start + clip.streams[clip.nodes[0]][frame_index].timestamp / 1000.0
            now = time.perf_counter()
            if now < target_wall:
                time.sleep(target_wall - now)

        for run_node in run_nodes:
            source = node_map[run_node]
            base = clip.streams[source][frame_index]
            frame = FrameRecord(
                node_id=run_node,
                frame_index=base.frame_index,
                timestamp=base.timestamp,
                quality=base.quality,
                detections=base.detections,
            )
            now = frame.timestamp
            emit(
                {
                    "record": "frame",
                    "node": run_node,
                    "frame_index": frame_index,
                    "timestamp": now,
                    "quality": frame.quality,
                    "config_version": last_version,
                    "detections": [d.to_obj() for d in frame.detections],
                }
            )
            verdict = quality_gate(frame, config.min_quality)
            if not verdict.passed:
                emit(
                    {
                        "record": "quality_advisory",
                        "node": run_node,
                        "frame_index": frame_index,
                        "timestamp": now,
                        "quality": frame.quality,
                        "advisory": verdict.advisory,
                    }
                )
            _, live = update_tracks(tracker_state, frame, config.tracker_params)
            if live:
                emit(
                    {
                        "record": "tracks",
                        "node": run_node,
                        "frame_index": frame_index,
                        "timestamp": now,
                        "tracks": [t.to_obj() for t in live],
                    }
                )
            candidates = evaluate_frame(live, config, now)
            if candidates:
                emit(
                    {
                        "record": "candidates",
                        "node": run_node,
                        "frame_index": frame_index,
                        "timestamp": now,
                        "candidates": [c.to_obj() for c in candidates],
                    }
                )
            for candidate in candidates:
                deliveries = debounce(
                    candidate, ledger, targets, now, config.debounce_window_ms
                )
                if not deliveries:
                    continue
                event = deliveries[0][1]
                alert_count += 1
                emit(
                    {
                        "record": "alert",
                        "event_id": event.event_id,
                        "timestamp": event.timestamp,
                        "node": event.node_id,
                        "track_id": event.track_id,
                        "class": event.cls,
                        "confidence_at_alert": event.confidence_at_alert,
                        "frame_index": frame_index,
                        "bbox": list(candidate.bbox),
                    }
                )
                result = dispatch(
                    event, spec.topology, [d for d, _ in deliveries], clock=now
                )
                for record in result.records:
                    emit({"record": "delivery", **record.to_obj()})
        frames_done += 1

    emit(
        {
            "record": "end",
            "status": "aborted" if aborted else "completed",
            "frames_processed": frames_done,
            "alerts": alert_count,
        }
    )
    return RunLog(header=header, records=records)

"""Simulated wearable-alert mesh: topology, hop routing, latency, pulses.

Hop latency interpolates linearly through two published round-trip anchors
for this class of low-rate mesh radio: 18 ms round trip at one hop and
100 ms at four hops, extrapolated beyond four. One-way delivery latency is
half the round trip (symmetric-path assumption, so reported delay figures
stay interpretable).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import DomainError, InvariantViolation, MissingFile, SchemaViolation, Unreachable
from .schemas import validate_document

COORDINATOR = "coordinator"
DEVICE_KINDS = ("alertband", "alertbeacon", "halo_light", "expansion_node")

ROUND_TRIP_1_HOP_MS = 18.0
ROUND_TRIP_4_HOP_MS = 100.0
PULSE_MS = 2000.0


@dataclass(frozen=True)
class Device:
    device_id: str
    kind: str
    position: Optional[str] = None

    def __post_init__(self):
        if self.kind not in DEVICE_KINDS:
            raise SchemaViolation(f"unknown device kind {self.kind!r}")
        if self.device_id == COORDINATOR:
            raise SchemaViolation(f"{COORDINATOR!r} is reserved for the mesh coordinator")

    def to_obj(self) -> dict:
        obj = {"device_id": self.device_id, "kind": self.kind}
        if self.position is not None:
            obj["position"] = self.position
        return obj


@dataclass(frozen=True)
class DeliveryRecord:
    """One alert landing on one device, with its pulse window."""

    event_id: int
    device_id: str
    hops: int
    dispatch_time: float
    delivery_time: float
    pulse_start: float
    pulse_duration: float

    def to_obj(self) -> dict:
        return {
            "event_id": self.event_id,
            "device_id": self.device_id,
            "hops": self.hops,
            "dispatch_time": self.dispatch_time,
            "delivery_time": self.delivery_time,
            "pulse_start": self.pulse_start,
            "pulse_duration": self.pulse_duration,
        }


class MeshTopology:
    """Immutable device graph rooted at the coordinator radio."""

    def __init__(self, devices: Sequence[Device], links: Sequence[Tuple[str, str]],
                 require_connected: bool = True):
        ids = [d.device_id for d in devices]
        if len(set(ids)) != len(ids):
            raise InvariantViolation("duplicate device_id in topology")
        known = set(ids) | {COORDINATOR}
        adjacency: Dict[str, set] = {n: set() for n in known}
        for a, b in links:
            if a not in known or b not in known:
                raise InvariantViolation(f"link ({a!r}, {b!r}) references unknown node")
            if a == b:
                raise InvariantViolation(f"self-link on {a!r}")
            adjacency[a].add(b)
            adjacency[b].add(a)
        self._devices: Tuple[Device, ...] = tuple(devices)
        self._links: Tuple[Tuple[str, str], ...] = tuple((a, b) for a, b in links)
        self._hops = self._bfs_hops(adjacency)
        if require_connected:
            missing = [d for d in ids if d not in self._hops]
            if missing:
                raise InvariantViolation(f"devices unreachable from coordinator: {missing}")

    @staticmethod
    def _bfs_hops(adjacency: Dict[str, set]) -> Dict[str, int]:
        hops = {COORDINATOR: 0}
        frontier = deque([COORDINATOR])
        while frontier:
            node = frontier.popleft()
            for neigh in sorted(adjacency[node]):
                if neigh not in hops:
                    hops[neigh] = hops[node] + 1
                    frontier.append(neigh)
        return hops

    @property
    def devices(self) -> Tuple[Device, ...]:
        return self._devices

    @property
    def device_ids(self) -> List[str]:
        return sorted(d.device_id for d in self._devices)

    def device(self, device_id: str) -> Device:
        for d in self._devices:
            if d.device_id == device_id:
                return d
        raise Unreachable(f"device {device_id!r} not in topology")

    def is_connected(self) -> bool:
        return all(d.device_id in self._hops for d in self._devices)

    def to_obj(self) -> dict:
        return {
            "devices": [d.to_obj() for d in sorted(self._devices, key=lambda d: d.device_id)],
            "links": [list(l) for l in sorted(tuple(sorted(l)) for l in self._links)],
        }

    @classmethod
    def from_obj(cls, obj: dict, require_connected: bool = True) -> "MeshTopology":
        validate_document("topology", obj, context="topology")
        devices = [
            Device(d["device_id"], d["kind"], d.get("position")) for d in obj["devices"]
        ]
        links = [tuple(pair) for pair in obj["links"]]
        return cls(devices, links, require_connected=require_connected)


def load_topology(path) -> MeshTopology:
    p = Path(path)
    if not p.exists():
        raise MissingFile(f"topology {p} does not exist")
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"topology {p.name} is not valid JSON: {exc}") from exc
    return MeshTopology.from_obj(obj)


def default_topology() -> MeshTopology:
    """One wristband directly on the coordinator: the smallest useful mesh."""
    return MeshTopology([Device("band0", "alertband")], [(COORDINATOR, "band0")])


def route_hops(topology: MeshTopology, device_id: str) -> int:
    """Shortest-path hop count from the coordinator to a device."""
    if not any(d.device_id == device_id for d in topology.devices):
        raise Unreachable(f"device {device_id!r} not in topology")
    hops = topology._hops.get(device_id)
    if hops is None:
        raise Unreachable(f"device {device_id!r} is partitioned from the coordinator")
    return hops


def round_trip_latency(hops: int) -> float:
    """Round-trip mesh latency in ms, linear through the published anchors."""
    if not isinstance(hops, int) or hops < 1:
        raise DomainError(f"hops must be an integer >= 1, got {hops!r}")
    slope_numerator = ROUND_TRIP_4_HOP_MS - ROUND_TRIP_1_HOP_MS  # per 3 hops
    return ROUND_TRIP_1_HOP_MS + slope_numerator * (hops - 1) / 3.0


def hop_latency(hops: int) -> float:
    """One-way delivery latency in ms: half the round-trip figure."""
    return round_trip_latency(hops) / 2.0


@dataclass(frozen=True)
class DispatchResult:
    """Per-device outcome of one alert dispatch; unreachable targets are
    reported rather than failing the whole dispatch."""

    records: Tuple[DeliveryRecord, ...]
    unreachable: Tuple[str, ...]


def dispatch(event, topology: MeshTopology, targets: Sequence[str], clock: float) -> DispatchResult:
    """Fan one alert out to the target devices.

    Every delivered record carries the shared pulse window starting at its
    delivery time; all device kinds mirror the 2000 ms wearable pulse.
    """
    records: List[DeliveryRecord] = []
    unreachable: List[str] = []
    for device_id in targets:
        try:
            hops = route_hops(topology, device_id)
        except Unreachable:
            unreachable.append(device_id)
            continue
        delivery_time = clock + hop_latency(hops)
        records.append(
            DeliveryRecord(
                event_id=event.event_id,
                device_id=device_id,
                hops=hops,
                dispatch_time=clock,
                delivery_time=delivery_time,
                pulse_start=delivery_time,
                pulse_duration=PULSE_MS,
            )
        )
    return DispatchResult(records=tuple(records), unreachable=tuple(unreachable))

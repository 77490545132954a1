"""Object registry merging vision poses and tag readings into world-frame annotations."""
from __future__ import annotations

import json
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import UnknownObject
from ..geometry import RigidTransform, compose
from ..rfid.channel import ReadEvent
from ..rfid.sensors import TemperatureReading, WaterLevel, decode_water_level

POSE_TTL_US = 2_000_000
SENSOR_TTL_US = 10_000_000
WATER = "water"
TEMPERATURE = "temperature"


@dataclass(frozen=True)
class CalibrationSet:
    t_depcam_to_hololens: RigidTransform = field(default_factory=RigidTransform.identity)
    t_hololens_to_world: RigidTransform = field(default_factory=RigidTransform.identity)

    def with_head_pose(self, t_hololens_to_world: RigidTransform) -> "CalibrationSet":
        return CalibrationSet(self.t_depcam_to_hololens, t_hololens_to_world)


def to_world_pose(m_pose_depcam: RigidTransform, cal: CalibrationSet) -> RigidTransform:
    """World <- headset <- depth camera <- object."""
    return compose(cal.t_hololens_to_world, compose(cal.t_depcam_to_hololens, m_pose_depcam))


@dataclass(frozen=True)
class VisionEvent:
    object_id: str
    m_pose_depcam: RigidTransform
    timestamp_us: int


@dataclass
class ObjectRegistryEntry:
    object_id: str
    epc_bindings: List[int] = field(default_factory=list)
    model_ref: str = ""
    rig: Dict[str, object] = field(default_factory=dict)
    latest_world_pose: Optional[Tuple[RigidTransform, int]] = None
    sensor_state: Dict[str, Tuple[object, int]] = field(default_factory=dict)

    def has_state(self) -> bool:
        return self.latest_world_pose is not None or bool(self.sensor_state)

    def _set_sensor(self, kind: str, value, ts: int) -> bool:
        cur = self.sensor_state.get(kind)
        if cur is not None and ts < cur[1]:
            return False
        self.sensor_state[kind] = (value, ts)
        return True


@dataclass(frozen=True)
class AugmentedAnnotation:
    object_id: str
    world_pose: Optional[Tuple[float, ...]]  # 16 numbers, row-major
    water_level: Optional[WaterLevel]
    temperature_celsius: Optional[float]
    stale: Dict[str, bool]
    timestamp_us: int

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "world_pose": list(self.world_pose) if self.world_pose is not None else None,
            "water_level": self.water_level.value if self.water_level is not None else None,
            "temperature_celsius": self.temperature_celsius,
            "stale": dict(self.stale),
            "timestamp_us": self.timestamp_us,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentedAnnotation":
        pose = tuple(float(x) for x in d["world_pose"]) if d.get("world_pose") is not None else None
        water = WaterLevel(d["water_level"]) if d.get("water_level") is not None else None
        return cls(d["object_id"], pose, water, d.get("temperature_celsius"), dict(d["stale"]),
                   int(d["timestamp_us"]))


def to_ndjson(annotations: Iterable[AugmentedAnnotation]) -> str:
    return "".join(a.to_json() + "\n" for a in annotations)


class Registry:
    """Thread-safe object state store.

    Every ingest call applies all of its updates under one lock, and
    snapshots take the same lock, so a reader never sees half of an ingest.
    """

    def __init__(self, entries: Iterable[ObjectRegistryEntry] = ()):
        self.lock = threading.RLock()
        self.entries: Dict[str, ObjectRegistryEntry] = {}
        self._epc_owner: Dict[int, str] = {}
        self.diagnostics: Counter = Counter()
        for e in entries:
            self.register(e)

    @classmethod
    def from_database(cls, db) -> "Registry":
        return cls(ObjectRegistryEntry(o.object_id, list(o.epc_bindings), o.model_ref, dict(o.rig)) for o in db)

    def register(self, entry: ObjectRegistryEntry) -> None:
        with self.lock:
            if entry.object_id in self.entries:
                raise ValueError(f"object {entry.object_id!r} already registered")
            for epc in entry.epc_bindings:
                owner = self._epc_owner.get(epc)
                if owner is not None:
                    raise ValueError(f"EPC {epc:024x} bound to both {owner!r} and {entry.object_id!r}")
            self.entries[entry.object_id] = entry
            for epc in entry.epc_bindings:
                self._epc_owner[epc] = entry.object_id

    def owner(self, epc: int) -> Optional[str]:
        return self._epc_owner.get(epc)

    def ingest_vision(self, event: VisionEvent, cal: CalibrationSet) -> bool:
        """Store the world pose; returns False when the event is older than the stored one."""
        with self.lock:
            entry = self.entries.get(event.object_id)
            if entry is None:
                raise UnknownObject(event.object_id)
            cur = entry.latest_world_pose
            if cur is not None and event.timestamp_us < cur[1]:
                self.diagnostics["stale_vision"] += 1
                return False
            entry.latest_world_pose = (to_world_pose(event.m_pose_depcam, cal), int(event.timestamp_us))
            return True

    def ingest_rfid(self, events: Sequence[ReadEvent], timestamp_us: int,
                    temperatures: Sequence[TemperatureReading] = ()) -> None:
        """Apply one inventory round plus any temperature readings taken during it.

        A water rig is decoded only for objects with at least one bound tag in
        this round; the Full state has every level tag silent, so the
        object's other tags are what places it in the reader field.
        """
        with self.lock:
            seen: Dict[str, set] = {}
            for ev in events:
                oid = self._epc_owner.get(ev.epc)
                if oid is None:
                    self.diagnostics["unknown_epc"] += 1
                    continue
                seen.setdefault(oid, set()).add(ev.epc)
            for oid, epcs in seen.items():
                rig = self.entries[oid].rig.get(WATER)
                if rig:
                    level = decode_water_level(rig["A"] in epcs, rig["B"] in epcs, rig["C"] in epcs)
                    self.entries[oid]._set_sensor(WATER, level, int(timestamp_us))
            for reading in temperatures:
                oid = self._epc_owner.get(reading.epc)
                if oid is None:
                    self.diagnostics["unknown_epc"] += 1
                    continue
                self.entries[oid]._set_sensor(TEMPERATURE, float(reading.celsius), int(reading.timestamp))

    def snapshot(self, now_us: int, pose_ttl_us: int = POSE_TTL_US,
                 sensor_ttl_us: int = SENSOR_TTL_US) -> List[AugmentedAnnotation]:
        """One annotation per object with any state, sorted by object id.

        A field is stale when it is older than its TTL at ``now_us``;
        absent fields are null and not stale.
        """
        out = []
        with self.lock:
            for oid in sorted(self.entries):
                e = self.entries[oid]
                if not e.has_state():
                    continue
                pose = water = temp = None
                stale = {"pose": False, "water": False, "temp": False}
                stamps = []
                if e.latest_world_pose is not None:
                    tr, ts = e.latest_world_pose
                    pose = tuple(float(x) for x in tr.as_matrix().reshape(-1))
                    stale["pose"] = now_us - ts > pose_ttl_us
                    stamps.append(ts)
                if WATER in e.sensor_state:
                    water, ts = e.sensor_state[WATER]
                    stale["water"] = now_us - ts > sensor_ttl_us
                    stamps.append(ts)
                if TEMPERATURE in e.sensor_state:
                    temp, ts = e.sensor_state[TEMPERATURE]
                    stale["temp"] = now_us - ts > sensor_ttl_us
                    stamps.append(ts)
                out.append(AugmentedAnnotation(oid, pose, water, temp, stale, max(stamps)))
        return out


def pose_matrix(annotation: AugmentedAnnotation) -> np.ndarray:
    return np.array(annotation.world_pose, dtype=np.float64).reshape(4, 4)

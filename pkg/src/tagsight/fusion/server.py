"""Fusion loop and the annotation server."""
from __future__ import annotations

import json
import random
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from ..errors import NotATemperatureTag, TagNotFound
from ..geometry import CameraIntrinsics, DepthImage, GrayImage, PointCloud, RigidTransform
from ..registration.pose import Method, PoseConfig, estimate_pose
from ..rfid.reader import ReaderSession, trigger_temperature
from .registry import (POSE_TTL_US, SENSOR_TTL_US, TEMPERATURE, AugmentedAnnotation, CalibrationSet, Registry,
                       VisionEvent, to_ndjson)


def parse_endpoint(text: str) -> Tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"endpoint must look like host:port, got {text!r}")
    return host, int(port)


def _matrix_field(value) -> RigidTransform:
    if value is None:
        return RigidTransform.identity()
    return RigidTransform.from_matrix(np.asarray(value, dtype=np.float64).reshape(4, 4))


@dataclass
class ServerConfig:
    pose_ttl_s: float = POSE_TTL_US / 1e6
    sensor_ttl_s: float = SENSOR_TTL_US / 1e6
    registry_path: Optional[str] = None
    reader_endpoint: Optional[str] = None
    listen_endpoint: Optional[str] = None
    calibration: CalibrationSet = field(default_factory=CalibrationSet)

    def __post_init__(self):
        if not (self.pose_ttl_s > 0 and self.sensor_ttl_s > 0):
            raise ValueError("TTLs must be positive")

    @property
    def pose_ttl_us(self) -> int:
        return int(round(self.pose_ttl_s * 1e6))

    @property
    def sensor_ttl_us(self) -> int:
        return int(round(self.sensor_ttl_s * 1e6))

    def to_dict(self) -> dict:
        cal = self.calibration
        return {
            "pose_ttl_s": self.pose_ttl_s, "sensor_ttl_s": self.sensor_ttl_s,
            "registry_path": self.registry_path, "reader_endpoint": self.reader_endpoint,
            "listen_endpoint": self.listen_endpoint,
            "t_depcam_to_hololens": cal.t_depcam_to_hololens.as_matrix().reshape(-1).tolist(),
            "t_hololens_to_world": cal.t_hololens_to_world.as_matrix().reshape(-1).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ServerConfig":
        cal = CalibrationSet(_matrix_field(d.get("t_depcam_to_hololens")),
                             _matrix_field(d.get("t_hololens_to_world")))
        return cls(float(d.get("pose_ttl_s", POSE_TTL_US / 1e6)), float(d.get("sensor_ttl_s", SENSOR_TTL_US / 1e6)),
                   d.get("registry_path"), d.get("reader_endpoint"), d.get("listen_endpoint"), cal)

    @classmethod
    def load(cls, path) -> "ServerConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


@dataclass
class Frame:
    """One depth-camera capture entering the fusion loop."""

    gray: GrayImage
    depth: DepthImage
    cloud: PointCloud
    intrinsics: CameraIntrinsics
    timestamp_us: int
    head_pose: Optional[RigidTransform] = None  # headset -> world at capture time


def poll_rfid(session: ReaderSession, registry: Registry, timestamp_us: int,
              rng: Optional[random.Random] = None) -> None:
    """One inventory round, a temperature trigger for every bound sensor tag seen, then ingest."""
    events = session.inventory()
    temp_epcs = set()
    with registry.lock:
        for e in registry.entries.values():
            epc = e.rig.get(TEMPERATURE)
            if epc is not None:
                temp_epcs.add(epc)
    readings = []
    for epc in sorted({ev.epc for ev in events} & temp_epcs):
        try:
            readings.append(trigger_temperature(session, epc, rng, clock=lambda: timestamp_us))
        except (TagNotFound, NotATemperatureTag):
            registry.diagnostics["temperature_failed"] += 1
    registry.ingest_rfid(events, timestamp_us, readings)


def run_fusion(frames: Iterable[Frame], db, registry: Registry, session: Optional[ReaderSession],
               config: ServerConfig = ServerConfig(), pose_config: Optional[PoseConfig] = None,
               out: Optional[TextIO] = None, rng: Optional[random.Random] = None) -> List[AugmentedAnnotation]:
    """Vision, then an RFID poll, then a snapshot per frame; snapshots go to ``out`` as NDJSON.

    Returns the last snapshot.
    """
    cal = config.calibration
    snap: List[AugmentedAnnotation] = []
    for f in frames:
        if f.head_pose is not None:
            cal = cal.with_head_pose(f.head_pose)
        res = estimate_pose(Method.LF_ICP, f.gray, f.depth, f.intrinsics, f.cloud, db, pose_config)
        if res is not None:
            registry.ingest_vision(VisionEvent(res.object_id, res.object_pose, f.timestamp_us), cal)
        else:
            registry.diagnostics["no_detection"] += 1
        if session is not None:
            poll_rfid(session, registry, f.timestamp_us, rng)
        snap = registry.snapshot(f.timestamp_us, config.pose_ttl_us, config.sensor_ttl_us)
        if out is not None:
            out.write(to_ndjson(snap))
            out.flush()
    return snap


def _now_us() -> int:
    return time.time_ns() // 1000


class _AnnotationHandler(socketserver.StreamRequestHandler):
    def handle(self):
        srv: AnnotationServer = self.server
        snap = srv.registry.snapshot(srv.clock(), srv.config.pose_ttl_us, srv.config.sensor_ttl_us)
        self.wfile.write(to_ndjson(snap).encode())


class AnnotationServer(socketserver.ThreadingTCPServer):
    """Each connection receives the current snapshot as NDJSON, then the server closes it."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, registry: Registry, config: ServerConfig = ServerConfig(),
                 address: Tuple[str, int] = ("127.0.0.1", 0), clock: Callable[[], int] = _now_us):
        self.registry = registry
        self.config = config
        self.clock = clock
        super().__init__(address, _AnnotationHandler)

    def start(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="annotation-server", daemon=True)
        t.start()
        return t


def fetch_annotations(host: str, port: int, timeout: float = 2.0) -> List[AugmentedAnnotation]:
    with socket.create_connection((host, port), timeout=timeout) as sock:
        chunks = []
        while True:
            b = sock.recv(65536)
            if not b:
                break
            chunks.append(b)
    lines = b"".join(chunks).decode().splitlines()
    return [AugmentedAnnotation.from_dict(json.loads(line)) for line in lines if line.strip()]


def frames_from_scenes(scenes: Sequence, start_us: int, period_us: int = 100_000) -> List[Frame]:
    return [Frame(s.gray, s.depth, s.cloud, s.intrinsics, start_us + i * period_us) for i, s in enumerate(scenes)]

"""Benchmark runner: recognition accuracy, residual and wall time per pose pipeline."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..features.matching import TemplateObject
from ..geometry import RigidTransform, rotation_angle_deg
from ..registration.pose import Method, PoseConfig, estimate_pose
from .render import generate_scene

SCHEMA_VERSION = 1
DEFAULT_YAW_RANGE = (-45.0, 45.0)
ALL_METHODS = (Method.LF_ICP, Method.LF_FPFH, Method.FPFH_ONLY)


def bench_pose(yaw_deg: float, distance: float) -> RigidTransform:
    """Object upright on the optical axis, turned ``yaw_deg`` about its own vertical axis."""
    return RigidTransform.from_axis_angle((0.0, 1.0, 0.0), yaw_deg, (0.0, 0.0, distance))


def pose_errors(est: RigidTransform, truth: RigidTransform,
                symmetry_axis: Optional[Sequence[float]] = None) -> Tuple[float, float]:
    """(translation error in m, rotation error in degrees).

    For an object of revolution only the direction of its axis is
    observable from shape, so the rotation error is the angle between the
    estimated and true axis directions.
    """
    dt = float(np.linalg.norm(est.translation - truth.translation))
    if symmetry_axis is None:
        return dt, rotation_angle_deg(est.rotation.T @ truth.rotation)
    a = np.asarray(symmetry_axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    c = float(np.clip((est.rotation @ a) @ (truth.rotation @ a), -1.0, 1.0))
    return dt, float(np.degrees(np.arccos(c)))


@dataclass
class BenchRow:
    object_id: str
    view: int
    yaw_deg: float
    distance_m: float
    scene_seed: int
    method: str
    predicted: Optional[str]
    correct: bool
    residual_m: Optional[float]
    translation_error_m: Optional[float]
    rotation_error_deg: Optional[float]
    viewpoint_index: Optional[int]
    m_pose: Optional[List[float]]
    object_pose: Optional[List[float]]
    time_s: float
    timings: Dict[str, float] = field(default_factory=dict)

    def to_dict(self, timings: bool = True) -> dict:
        d = dict(self.__dict__)
        if not timings:
            d.pop("time_s")
            d.pop("timings")
        return d


@dataclass
class MethodSummary:
    method: str
    correct: int
    total: int
    mean_residual_m: Optional[float]
    mean_time_s: float

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def to_dict(self, timings: bool = True) -> dict:
        d = {"method": self.method, "accuracy": self.accuracy, "correct": self.correct, "total": self.total,
             "mean_residual_m": self.mean_residual_m}
        if timings:
            d["mean_time_s"] = self.mean_time_s
        return d


@dataclass
class BenchReport:
    settings: dict
    rows: List[BenchRow]

    def summary(self) -> Dict[str, MethodSummary]:
        out = {}
        for m in sorted({r.method for r in self.rows}):
            rows = [r for r in self.rows if r.method == m]
            res = [r.residual_m for r in rows if r.correct and r.residual_m is not None]
            out[m] = MethodSummary(m, sum(r.correct for r in rows), len(rows),
                                   float(np.mean(res)) if res else None,
                                   float(np.mean([r.time_s for r in rows])))
        return out

    def rows_for(self, method) -> List[BenchRow]:
        m = Method(method).value
        return [r for r in self.rows if r.method == m]

    def to_dict(self, timings: bool = True) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "settings": self.settings,
            "methods": {k: v.to_dict(timings) for k, v in self.summary().items()},
            "rows": [r.to_dict(timings) for r in self.rows],
        }

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)


def run_benchmark(db: Sequence[TemplateObject], n_views: int = 5, distance_range: Tuple[float, float] = (0.3, 0.5),
                  methods: Sequence = ALL_METHODS, seed: int = 42, noise_sigma: float = 0.0,
                  config: Optional[PoseConfig] = None,
                  yaw_range: Tuple[float, float] = DEFAULT_YAW_RANGE) -> BenchReport:
    """Render ``n_views`` random views of every object and run each method on them.

    Views are drawn per object in database order: yaw uniform in
    ``yaw_range``, distance uniform in ``distance_range``. Timing covers
    ``estimate_pose`` only.
    """
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    lo, hi = distance_range
    if not 0.1 < lo <= hi < 2.0:
        raise ValueError("distance_range must lie within (0.1, 2.0) m")
    methods = [Method(m) for m in methods]
    rng = np.random.default_rng(seed)
    rows = []
    for obj in db:
        for view in range(n_views):
            yaw = float(rng.uniform(*yaw_range))
            dist = float(rng.uniform(lo, hi))
            truth = bench_pose(yaw, dist)
            scene = generate_scene(db, obj.object_id, truth, noise_sigma, seed=view)
            for m in methods:
                t0 = time.perf_counter()
                res = estimate_pose(m, scene.gray, scene.depth, scene.intrinsics, scene.cloud, db, config)
                elapsed = time.perf_counter() - t0
                if res is None:
                    rows.append(BenchRow(obj.object_id, view, yaw, dist, view, m.value, None, False, None, None, None,
                                         None, None, None, elapsed))
                    continue
                correct = res.object_id == obj.object_id
                dt = dr = None
                if correct:
                    dt, dr = pose_errors(res.object_pose, truth, obj.symmetry_axis)
                rows.append(BenchRow(
                    obj.object_id, view, yaw, dist, view, m.value, res.object_id, correct,
                    res.estimate.residual, dt, dr, res.estimate.viewpoint_index,
                    res.estimate.m_pose.as_matrix().reshape(-1).tolist(),
                    res.object_pose.as_matrix().reshape(-1).tolist(), elapsed, dict(res.timings)))
    settings = {"n_views": n_views, "distance_range": [lo, hi], "yaw_range": list(yaw_range),
                "methods": [m.value for m in methods], "seed": seed, "noise_sigma": noise_sigma,
                "objects": [o.object_id for o in db]}
    return BenchReport(settings, rows)

import math
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tagsight.geometry import RigidTransform, apply, axis_angle_matrix
from tagsight.harness.bench import ALL_METHODS, run_benchmark
from tagsight.harness.builtin import builtin_database

settings.register_profile("tagsight", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("tagsight")

# wall-clock seconds spent building the session benchmark reports
BENCH_WALL = {}


def random_transform(rng: np.random.Generator, max_translation: float = 1.0) -> RigidTransform:
    axis = rng.normal(size=3)
    angle = rng.uniform(0, np.pi)
    return RigidTransform(axis_angle_matrix(axis, angle), rng.uniform(-max_translation, max_translation, 3))


def brute_residual(target: np.ndarray, template: np.ndarray) -> float:
    total = []
    for t in target:
        best = math.inf
        for p in template:
            d = math.sqrt((t[0] - p[0]) ** 2 + (t[1] - p[1]) ** 2 + (t[2] - p[2]) ** 2)
            best = min(best, d)
        total.append(best)
    return math.fsum(total) / len(total)


def euler_grid(yaw, pitch, roll) -> np.ndarray:
    """Rotations Rz(yaw) Ry(pitch) Rx(roll) for every combination of the given angles (radians)."""
    y, p, r = (a.reshape(-1) for a in np.meshgrid(yaw, pitch, roll, indexing="ij"))
    cy, sy, cp, sp, cr, sr = np.cos(y), np.sin(y), np.cos(p), np.sin(p), np.cos(r), np.sin(r)
    return np.stack([
        np.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr], -1),
        np.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr], -1),
        np.stack([-sp, cp * sr, cp * cr], -1),
    ], axis=1), np.stack([y, p, r], -1)


def grid_search_rotation(src: np.ndarray, tgt: np.ndarray):
    """Brute-force least-squares rotation: 5 deg global grid, then 0.5 deg grid around the winner.

    Translation is eliminated by centring both sets, which is exact for the
    least-squares objective.
    """
    a = src - src.mean(0)
    b = tgt - tgt.mean(0)

    def cost(rs):
        return ((np.einsum("kij,nj->kni", rs, a) - b[None]) ** 2).sum(axis=(1, 2))

    step = np.radians(5.0)
    rs, angles = euler_grid(np.arange(-np.pi, np.pi, step), np.arange(-np.pi / 2, np.pi / 2 + 1e-9, step),
                            np.arange(-np.pi, np.pi, step))
    best = angles[np.argmin(cost(rs))]
    fine = np.radians(np.arange(-5.0, 5.0 + 1e-9, 0.5))
    rs, _ = euler_grid(best[0] + fine, best[1] + fine, best[2] + fine)
    c = cost(rs)
    i = int(np.argmin(c))
    return rs[i], float(c[i])


def lsq_cost(t: RigidTransform, src, tgt) -> float:
    return float(((apply(t, src) - tgt) ** 2).sum())


@pytest.fixture(scope="session")
def db():
    """The three built-in objects, 36 viewpoints each (built once)."""
    return builtin_database()


@pytest.fixture(scope="session")
def bench_report(db):
    """Seed-42 suite: 3 objects x 5 views at 0.3-0.5 m, every method."""
    t0 = time.perf_counter()
    report = run_benchmark(db, n_views=5, distance_range=(0.3, 0.5), methods=ALL_METHODS, seed=42)
    BENCH_WALL["noiseless"] = time.perf_counter() - t0
    return report


@pytest.fixture(scope="session")
def noisy_report(db):
    """Same views with 1 mm depth noise, feature + ICP pipeline only."""
    t0 = time.perf_counter()
    report = run_benchmark(db, n_views=5, distance_range=(0.3, 0.5), methods=["lf-icp"], seed=42,
                           noise_sigma=0.001)
    BENCH_WALL["noisy"] = time.perf_counter() - t0
    return report


@pytest.fixture(scope="session")
def mug_sweep(db):
    """Default channel and a rendered mug, 0.2-2.0 m in 0.1 m steps."""
    from tagsight.harness.sweep import RenderedVisionModel, working_range_sweep
    from tagsight.rfid.channel import ChannelParams
    return working_range_sweep(ChannelParams(), RenderedVisionModel(db, "mug"), 0.2, 2.0, 19)

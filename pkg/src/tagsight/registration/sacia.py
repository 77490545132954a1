"""Sample-consensus initial alignment over FPFH correspondences."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateConfiguration
from ..geometry import PointCloud, RigidTransform
from .fpfh import DEFAULT_FEATURE_RADIUS, DEFAULT_NORMAL_RADIUS, fpfh
from .kabsch import kabsch_batch
from .spatial import NearestNeighborIndex


@dataclass(frozen=True)
class SaciaParams:
    n_samples: int = 3
    iterations: int = 500
    min_sample_distance: float = 0.02  # m, between sampled template points
    k_correspondences: int = 5
    truncation: float = 0.01  # m, per-point cap in the fitness score
    max_score_points: int = 100
    normal_radius: float = DEFAULT_NORMAL_RADIUS
    feature_radius: float = DEFAULT_FEATURE_RADIUS


def _sample(rng: np.random.Generator, pts: np.ndarray, n: int, count: int, min_dist: float,
            rounds: int = 50) -> np.ndarray:
    """``count`` rows of ``n`` distinct indices whose points are pairwise at least ``min_dist`` apart.

    Candidates are drawn in vectorised batches; if too few well-separated
    rows turn up after ``rounds`` batches the remainder is filled with rows
    that are merely distinct (best effort, as for tiny clouds).
    """
    iu = np.triu_indices(n, 1)
    good, fallback = [], []
    have = 0
    for _ in range(rounds):
        cand = rng.integers(0, len(pts), size=(count, n))
        srt = np.sort(cand, axis=1)
        distinct = np.all(srt[:, 1:] != srt[:, :-1], axis=1)
        p = pts[cand]
        d = np.linalg.norm(p[:, :, None] - p[:, None], axis=3)[:, iu[0], iu[1]]
        ok = distinct & (d.min(axis=1) >= min_dist)
        good.append(cand[ok])
        fallback.append(cand[distinct & ~ok])
        have += int(ok.sum())
        if have >= count:
            break
    rows = np.concatenate(good + fallback)
    if len(rows) < count:
        raise DegenerateConfiguration("could not draw distinct sample points")
    return rows[:count]


def sacia_align(template: PointCloud, scene: PointCloud, n_samples: int = 3, iterations: int = 500,
                seed: int = 0, params: Optional[SaciaParams] = None,
                template_features: Optional[np.ndarray] = None, scene_features: Optional[np.ndarray] = None,
                scene_index: Optional[NearestNeighborIndex] = None,
                template_viewpoint=(0.0, 0.0, 0.0), scene_viewpoint=(0.0, 0.0, 0.0)) -> Tuple[RigidTransform, float]:
    """Coarse template-to-scene transform and its fitness (lower is better).

    Each trial samples ``n_samples`` well-separated template points, pairs
    each with a random one of its ``k_correspondences`` nearest scene points
    in feature space, solves the rigid fit, and scores it by the mean
    closest-point distance of the transformed template, truncated per point.
    The result depends only on the inputs and ``seed``.
    """
    p = params or SaciaParams()
    if n_samples < 3:
        raise ValueError("n_samples must be >= 3")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if len(template) < n_samples:
        raise DegenerateConfiguration("template has fewer points than n_samples")
    if template_features is None:
        template_features = fpfh(template, p.normal_radius, p.feature_radius, template_viewpoint)
    if scene_features is None:
        scene_features = fpfh(scene, p.normal_radius, p.feature_radius, scene_viewpoint)
    index = scene_index or NearestNeighborIndex(scene)
    rng = np.random.default_rng(seed)

    k = min(p.k_correspondences, len(scene))
    _, cand = cKDTree(scene_features).query(template_features, k=k)
    cand = np.asarray(cand).reshape(len(template), k)

    tpts = template.points
    samples = _sample(rng, tpts, n_samples, iterations, p.min_sample_distance)
    pick = rng.integers(0, k, size=samples.shape)
    matched = cand[samples, pick]
    r, t, degenerate = kabsch_batch(tpts[samples], index.points[matched])
    if np.all(degenerate):
        raise DegenerateConfiguration("every SAC-IA trial was degenerate")

    if len(tpts) > p.max_score_points:
        score_idx = np.linspace(0, len(tpts) - 1, p.max_score_points).round().astype(np.int64)
        score_pts = tpts[score_idx]
    else:
        score_pts = tpts
    moved = np.matmul(score_pts[None], r.transpose(0, 2, 1)) + t[:, None, :]
    # distances past the truncation are capped anyway, so the search may stop there
    dist, _ = index.query(moved.reshape(-1, 3), distance_upper_bound=p.truncation)
    fitness = np.minimum(dist, p.truncation).reshape(iterations, -1).mean(axis=1)
    fitness[degenerate] = np.inf
    best = int(np.argmin(fitness))
    return RigidTransform(r[best], t[best]), float(fitness[best])

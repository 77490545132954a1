"""Least-squares rigid alignment of paired point sets (SVD of the cross-covariance)."""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateConfiguration
from ..geometry import RigidTransform

# relative size of the second singular value below which points count as collinear
_COLLINEAR_TOL = 1e-9


def _check(source: np.ndarray, target: np.ndarray) -> None:
    if source.shape != target.shape or source.ndim != 2 or source.shape[1] != 3:
        raise ValueError("source and target must both be (N, 3)")
    if len(source) < 3:
        raise DegenerateConfiguration("need at least 3 point pairs")


def kabsch_solve(source, target) -> RigidTransform:
    """Rigid transform T minimising sum ||T(source_i) - target_i||^2."""
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    _check(src, tgt)
    cs = src.mean(axis=0)
    ct = tgt.mean(axis=0)
    a = src - cs
    b = tgt - ct
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0 or sv[1] <= _COLLINEAR_TOL * sv[0]:
        raise DegenerateConfiguration("source points are coincident or collinear")
    u, _, vt = np.linalg.svd(a.T @ b)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0:
        d = 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, ct - r @ cs)


def kabsch_batch(source: np.ndarray, target: np.ndarray):
    """Batched solve over (B, n, 3) pairs.

    Returns rotations (B, 3, 3), translations (B, 3) and a boolean mask of
    degenerate (collinear) samples whose results must be ignored.
    """
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    cs = src.mean(axis=1, keepdims=True)
    ct = tgt.mean(axis=1, keepdims=True)
    a = src - cs
    b = tgt - ct
    sv = np.linalg.svd(a, compute_uv=False)
    degenerate = (sv[:, 0] == 0) | (sv[:, 1] <= _COLLINEAR_TOL * sv[:, 0])
    u, _, vt = np.linalg.svd(np.einsum("bni,bnj->bij", a, b))
    v = np.swapaxes(vt, 1, 2)
    ut = np.swapaxes(u, 1, 2)
    d = np.sign(np.linalg.det(v @ ut))
    d[d == 0] = 1.0
    fix = np.ones((len(src), 3))
    fix[:, 2] = d
    r = (v * fix[:, None, :]) @ ut
    t = ct[:, 0, :] - np.einsum("bij,bj->bi", r, cs[:, 0, :])
    return r, t, degenerate

"""Fast Point Feature Histograms.

Each point gets a 33-bin signature: three 11-bin histograms of the angular
pair features (theta, alpha, phi) between the point's Darboux frame and its
neighbours, blended with the neighbours' own histograms weighted by inverse
distance. Every 11-bin block sums to 100.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import InsufficientNeighbors
from ..geometry import PointCloud
from .spatial import NearestNeighborIndex

BINS = 11
DIM = 3 * BINS
DEFAULT_NORMAL_RADIUS = 0.01
DEFAULT_FEATURE_RADIUS = 0.025
_SWAP_TOL = 1e-9  # rad


def _pairs(index: NearestNeighborIndex, pts: np.ndarray, radius: float):
    """Flattened (i, j) neighbour pairs within ``radius`` (self included)."""
    lists = index.radius(pts, radius)
    counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
    i = np.repeat(np.arange(len(pts)), counts)
    j = np.fromiter((x for l in lists for x in l), dtype=np.int64, count=int(counts.sum()))
    return i, j, counts


def drop_sparse(cloud: PointCloud, radius: float, min_neighbors: int = 3,
                index: Optional[NearestNeighborIndex] = None) -> PointCloud:
    """Remove points with fewer than ``min_neighbors`` points (self included) within ``radius``.

    Repeats until stable, since each removal can starve a neighbour.
    """
    while len(cloud):
        index = index or NearestNeighborIndex(cloud)
        keep = np.flatnonzero(index.radius_count(cloud.points, radius) >= min_neighbors)
        if len(keep) == len(cloud):
            break
        cloud, index = cloud.subset(keep), None
    return cloud


def estimate_normals(cloud: PointCloud, radius: float, viewpoint=(0.0, 0.0, 0.0),
                     index: NearestNeighborIndex = None) -> np.ndarray:
    """PCA normals (smallest-eigenvalue direction) oriented toward ``viewpoint``."""
    pts = cloud.points
    index = index or NearestNeighborIndex(pts)
    i, j, counts = _pairs(index, pts, radius)
    if counts.min() < 3:
        bad = int(np.argmin(counts))
        raise InsufficientNeighbors(f"point {bad} has {counts[bad]} neighbours within {radius} m (need 3)")
    rel = pts[j] - pts[i]
    n = len(pts)
    s1 = np.zeros((n, 3))
    s2 = np.zeros((n, 3, 3))
    np.add.at(s1, i, rel)
    np.add.at(s2, i, rel[:, :, None] * rel[:, None, :])
    mean = s1 / counts[:, None]
    cov = s2 / counts[:, None, None] - mean[:, :, None] * mean[:, None, :]
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    flip = np.einsum("ij,ij->i", normals, np.asarray(viewpoint, dtype=np.float64) - pts) < 0
    normals[flip] *= -1
    return normals


def pair_features(p1, n1, p2, n2):
    """Vectorised (theta, alpha, phi) for point pairs; rows with a degenerate frame are NaN."""
    dp = p2 - p1
    dist = np.linalg.norm(dp, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        a1 = np.einsum("ij,ij->i", n1, dp) / dist
        a2 = np.einsum("ij,ij->i", n2, dp) / dist
    # the source is the endpoint whose normal is closer to the connecting line; near-ties
    # (equal normals are common) keep the given order so that round-off cannot flip phi
    swap = np.arccos(np.clip(np.abs(a1), 0, 1)) > np.arccos(np.clip(np.abs(a2), 0, 1)) + _SWAP_TOL
    u = np.where(swap[:, None], n2, n1)
    nt = np.where(swap[:, None], n1, n2)
    dp = np.where(swap[:, None], -dp, dp)
    phi = np.where(swap, -a2, a1)
    v = np.cross(dp, u)
    vn = np.linalg.norm(v, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = v / vn[:, None]
    w = np.cross(u, v)
    alpha = np.einsum("ij,ij->i", v, nt)
    theta = np.arctan2(np.einsum("ij,ij->i", w, nt), np.einsum("ij,ij->i", u, nt))
    bad = (vn == 0) | (dist == 0)
    theta[bad] = np.nan
    return theta, alpha, phi


def _bin(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    b = np.floor(BINS * (values - lo) / (hi - lo)).astype(np.int64)
    return np.clip(b, 0, BINS - 1)


def spfh(pts: np.ndarray, normals: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Simplified point feature histograms from neighbour pairs (self-pairs excluded)."""
    n = len(pts)
    theta, alpha, phi = pair_features(pts[i], normals[i], pts[j], normals[j])
    ok = ~np.isnan(theta)
    i, theta, alpha, phi = i[ok], theta[ok], alpha[ok], phi[ok]
    counts = np.bincount(i, minlength=n).astype(np.float64)
    incr = np.divide(100.0, counts, out=np.zeros(n), where=counts > 0)[i]
    hist = np.zeros((n, DIM))
    np.add.at(hist, (i, _bin(theta, -np.pi, np.pi)), incr)
    np.add.at(hist, (i, BINS + _bin(alpha, -1.0, 1.0)), incr)
    np.add.at(hist, (i, 2 * BINS + _bin(phi, -1.0, 1.0)), incr)
    return hist


def fpfh(cloud: PointCloud, normal_radius: float = DEFAULT_NORMAL_RADIUS,
         feature_radius: float = DEFAULT_FEATURE_RADIUS, viewpoint=(0.0, 0.0, 0.0)) -> np.ndarray:
    """(N, 33) FPFH signatures, one row per point of ``cloud``."""
    if not feature_radius > normal_radius > 0:
        raise ValueError("need feature_radius > normal_radius > 0")
    if len(cloud) < 10:
        raise InsufficientNeighbors("fpfh needs at least 10 points")
    pts = cloud.points
    index = NearestNeighborIndex(pts)
    normals = estimate_normals(cloud, normal_radius, viewpoint, index)
    i, j, _ = _pairs(index, pts, feature_radius)
    off = i != j
    i, j = i[off], j[off]
    own = spfh(pts, normals, i, j)
    d = np.linalg.norm(pts[j] - pts[i], axis=1)
    ok = d > 0
    i, j, d = i[ok], j[ok], d[ok]
    k = np.bincount(i, minlength=len(pts)).astype(np.float64)
    acc = np.zeros_like(own)
    np.add.at(acc, i, own[j] / d[:, None])
    hist = own + np.divide(acc, k[:, None], out=np.zeros_like(acc), where=k[:, None] > 0)
    blocks = hist.reshape(-1, 3, BINS)
    sums = blocks.sum(axis=2, keepdims=True)
    blocks = np.divide(100.0 * blocks, sums, out=np.zeros_like(blocks), where=sums > 0)
    return blocks.reshape(-1, DIM)

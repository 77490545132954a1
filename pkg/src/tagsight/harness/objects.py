"""Procedural textured desk objects: bottle, cup and mug.

Object frame: origin on the body axis at mid-height, +y pointing down (so
the identity pose is upright in the camera frame), handle of the mug on +x.
Surfaces carry high-contrast blob textures so blob detectors fire reliably.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..geometry import PointCloud

SURFACE_SPACING = 0.001  # m between model points
BASE_INTENSITY = 0.6


@dataclass(frozen=True)
class ObjectSpec:
    object_id: str
    profile: Tuple[Tuple[float, float], ...]  # (y, radius) polyline, top to bottom
    texture_seed: int
    handle: bool = False
    symmetry_axis: Optional[Tuple[float, float, float]] = None


BOTTLE = ObjectSpec(
    "bottle",
    ((-0.100, 0.014), (-0.075, 0.014), (-0.040, 0.035), (0.100, 0.035)),
    texture_seed=11,
    symmetry_axis=(0.0, 1.0, 0.0),
)
CUP = ObjectSpec(
    "cup",
    ((-0.050, 0.045), (0.050, 0.032)),
    texture_seed=23,
    symmetry_axis=(0.0, 1.0, 0.0),
)
MUG = ObjectSpec(
    "mug",
    ((-0.0475, 0.040), (0.0475, 0.040)),
    texture_seed=37,
    handle=True,
)
BUILTIN_OBJECTS = (BOTTLE, CUP, MUG)

# handle: half torus on +x, in the x-y plane, set above mid-height so the
# mug has no geometric symmetry left
HANDLE_MAJOR = 0.026
HANDLE_MINOR = 0.007
HANDLE_CENTER_Y = -0.010


def make_texture(seed: int, t_range: Tuple[float, float], density: float = 2500.0,
                 ) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Random disks and bars in (arc length, height) surface coordinates.

    ``density`` is blobs per square meter. Arc length wraps with period
    ``2*pi*0.04`` so the pattern is seamless.
    """
    rng = np.random.default_rng(seed)
    period = 2 * np.pi * 0.04
    lo, hi = t_range
    n_blobs = int(density * period * (hi - lo))
    cs = rng.uniform(0, period, n_blobs)
    ct = rng.uniform(lo, hi, n_blobs)
    rad = rng.uniform(0.003, 0.009, n_blobs)
    val = np.where(rng.random(n_blobs) < 0.6, rng.uniform(0.02, 0.2, n_blobs), rng.uniform(0.92, 1.0, n_blobs))
    n_bars = max(n_blobs // 8, 1)
    bs = rng.uniform(0, period, n_bars)
    bt = rng.uniform(lo, hi, n_bars)
    bw = rng.uniform(0.002, 0.004, n_bars)
    bh = rng.uniform(0.010, 0.025, n_bars)
    bv = rng.uniform(0.05, 0.2, n_bars)

    def texture(s: np.ndarray, t: np.ndarray) -> np.ndarray:
        out = np.full(s.shape, BASE_INTENSITY)
        for k in range(n_bars):
            ds = (s - bs[k] + period / 2) % period - period / 2
            out = np.where((np.abs(ds) < bw[k]) & (np.abs(t - bt[k]) < bh[k]), bv[k], out)
        for k in range(n_blobs):
            ds = (s - cs[k] + period / 2) % period - period / 2
            out = np.where(ds * ds + (t - ct[k]) ** 2 < rad[k] ** 2, val[k], out)
        return out

    return texture


def _revolve(profile: Sequence[Tuple[float, float]], spacing: float):
    """Points on the surface of revolution of a (y, r) polyline about the y axis."""
    pts, s_coord, t_coord = [], [], []
    for (y0, r0), (y1, r1) in zip(profile[:-1], profile[1:]):
        seg = np.hypot(y1 - y0, r1 - r0)
        n = max(int(np.ceil(seg / spacing)), 1)
        for f in (np.arange(n) + 0.5) / n:
            y = y0 + f * (y1 - y0)
            r = r0 + f * (r1 - r0)
            m = max(int(np.ceil(2 * np.pi * r / spacing)), 8)
            th = (np.arange(m) + 0.5) * 2 * np.pi / m
            pts.append(np.stack([r * np.cos(th), np.full(m, y), r * np.sin(th)], axis=1))
            s_coord.append(th * 0.04)
            t_coord.append(np.full(m, y))
    return np.concatenate(pts), np.concatenate(s_coord), np.concatenate(t_coord)


def _cap(y: float, r: float, spacing: float):
    pts = []
    rings = max(int(np.ceil(r / spacing)), 1)
    for i in range(rings):
        rr = (i + 0.5) * r / rings
        m = max(int(np.ceil(2 * np.pi * rr / spacing)), 6)
        th = (np.arange(m) + 0.5) * 2 * np.pi / m
        pts.append(np.stack([rr * np.cos(th), np.full(m, y), rr * np.sin(th)], axis=1))
    return np.concatenate(pts)


def _handle(x0: float, spacing: float):
    n_major = int(np.ceil(np.pi * HANDLE_MAJOR / spacing))
    n_minor = int(np.ceil(2 * np.pi * HANDLE_MINOR / spacing))
    phi = -np.pi / 2 + (np.arange(n_major) + 0.5) * np.pi / n_major
    psi = (np.arange(n_minor) + 0.5) * 2 * np.pi / n_minor
    phi, psi = np.meshgrid(phi, psi, indexing="ij")
    radial = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
    center = np.array([x0, HANDLE_CENTER_Y, 0.0]) + HANDLE_MAJOR * radial
    off = HANDLE_MINOR * (np.cos(psi)[..., None] * radial + np.sin(psi)[..., None] * np.array([0, 0, 1.0]))
    pts = (center + off).reshape(-1, 3)
    # drop the part buried inside the body
    return pts[np.hypot(pts[:, 0], pts[:, 2]) > x0 - 0.5 * spacing]


def build_model(spec: ObjectSpec, spacing: float = SURFACE_SPACING) -> PointCloud:
    """Dense textured surface model of ``spec`` in the object frame."""
    side, s, t = _revolve(spec.profile, spacing)
    tex = make_texture(spec.texture_seed, (spec.profile[0][0], spec.profile[-1][0]))
    inten = [tex(s, t)]
    pts = [side]
    top_y, top_r = spec.profile[0]
    bot_y, bot_r = spec.profile[-1]
    for y, r in ((top_y, top_r), (bot_y, bot_r)):
        cap = _cap(y, r, spacing)
        pts.append(cap)
        inten.append(np.full(len(cap), 0.85))
    if spec.handle:
        h = _handle(spec.profile[0][1], spacing)
        pts.append(h)
        inten.append(np.full(len(h), 0.3))
    g = np.round(np.concatenate(inten) * 255).astype(np.uint8)
    return PointCloud(np.concatenate(pts), np.repeat(g[:, None], 3, axis=1))

"""Upright SURF-style interest points on integral images.

Determinant-of-Hessian responses come from box filters evaluated with four
lookups each; maxima are found with 3x3x3 non-maximum suppression and
refined by fitting a quadratic in (x, y, scale).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.ndimage import maximum_filter

from ..errors import ImageTooSmall
from ..geometry import GrayImage

DEFAULT_THRESHOLD = 4e-4
DEFAULT_OCTAVES = 4
MAX_KEYPOINTS = 500
LAYERS_PER_OCTAVE = 4
MIN_IMAGE_SIZE = 32
DESCRIPTOR_DIM = 64


@dataclass(frozen=True)
class Keypoint:
    u: float
    v: float
    scale: float
    response: float


def integral_image(img: GrayImage) -> np.ndarray:
    """Summed-area table: entry [y, x] is the sum over rows 0..y and columns 0..x."""
    return np.cumsum(np.cumsum(img.data, axis=0), axis=1)


def box_sum(table: np.ndarray, r0: int, c0: int, r1: int, c1: int) -> float:
    """Sum over the inclusive rectangle rows r0..r1, columns c0..c1."""
    total = table[r1, c1]
    if r0 > 0:
        total -= table[r0 - 1, c1]
    if c0 > 0:
        total -= table[r1, c0 - 1]
    if r0 > 0 and c0 > 0:
        total += table[r0 - 1, c0 - 1]
    return float(total)


def _padded_integral(data: np.ndarray) -> np.ndarray:
    p = np.zeros((data.shape[0] + 1, data.shape[1] + 1))
    p[1:, 1:] = np.cumsum(np.cumsum(data, axis=0), axis=1)
    return p


def _box(p: np.ndarray, row, col, rows, cols):
    """Vectorised sum over rows [row, row+rows) x cols [col, col+cols), clipped to the image."""
    h, w = p.shape[0] - 1, p.shape[1] - 1
    r0 = np.clip(row, 0, h)
    c0 = np.clip(col, 0, w)
    r1 = np.clip(row + rows, 0, h)
    c1 = np.clip(col + cols, 0, w)
    return p[r1, c1] - p[r0, c1] - p[r1, c0] + p[r0, c0]


def filter_sizes(octave: int) -> List[int]:
    """Box filter side lengths of the four layers in ``octave`` (0-based)."""
    return [3 * ((2 ** (octave + 1)) * (i + 1) + 1) for i in range(LAYERS_PER_OCTAVE)]


def _grid_box(pe: np.ndarray, pad: int, h: int, w: int, step: int, dr: int, dc: int, rows: int, cols: int):
    """Box sums over rows [r+dr, r+dr+rows) x cols [c+dc, c+dc+cols) for every grid cell (r, c).

    ``pe`` is the padded integral image edge-extended by ``pad`` cells, which
    clips boxes to the image exactly like index clamping would.
    """
    def at(a, b):
        return pe[pad + a: pad + a + h: step, pad + b: pad + b + w: step]
    return at(dr + rows, dc + cols) - at(dr, dc + cols) - at(dr + rows, dc) + at(dr, dc)


def hessian_response(p: np.ndarray, step: int, size: int, pe: Optional[np.ndarray] = None,
                     pad: Optional[int] = None) -> np.ndarray:
    """Box-filter determinant of Hessian on the grid ``0, step, 2*step, ...``.

    Cells where the filter does not fit inside the image are zero.
    """
    h, w = p.shape[0] - 1, p.shape[1] - 1
    if pe is None:
        pad = size + 1
        pe = np.pad(p, pad, mode="edge")
    b = (size - 1) // 2
    lobe = size // 3
    inv_area = 1.0 / (size * size)

    def box(dr, dc, rows, cols):
        return _grid_box(pe, pad, h, w, step, dr, dc, rows, cols)

    dxx = box(-lobe + 1, -b, 2 * lobe - 1, size) - 3 * box(-lobe + 1, -(lobe // 2), 2 * lobe - 1, lobe)
    dyy = box(-b, -lobe + 1, size, 2 * lobe - 1) - 3 * box(-(lobe // 2), -lobe + 1, lobe, 2 * lobe - 1)
    dxy = box(-lobe, 1, lobe, lobe) + box(1, -lobe, lobe, lobe) - box(-lobe, -lobe, lobe, lobe) - box(1, 1, lobe, lobe)
    det = (dxx * dyy - 0.81 * dxy * dxy) * (inv_area * inv_area)
    r = np.arange(0, h, step)[:, None]
    c = np.arange(0, w, step)[None, :]
    valid = (r >= b) & (r <= h - 1 - b) & (c >= b) & (c <= w - 1 - b)
    return np.where(valid, det, 0.0)


def _refine(stack: np.ndarray, i: int, y: int, x: int) -> Optional[np.ndarray]:
    """Quadratic-fit offset (dx, dy, ds) of a discrete extremum, or None if it drifts too far."""
    m = stack
    v = m[i, y, x]
    g = 0.5 * np.array([m[i, y, x + 1] - m[i, y, x - 1],
                        m[i, y + 1, x] - m[i, y - 1, x],
                        m[i + 1, y, x] - m[i - 1, y, x]])
    dxx = m[i, y, x + 1] + m[i, y, x - 1] - 2 * v
    dyy = m[i, y + 1, x] + m[i, y - 1, x] - 2 * v
    dss = m[i + 1, y, x] + m[i - 1, y, x] - 2 * v
    dxy = 0.25 * (m[i, y + 1, x + 1] - m[i, y + 1, x - 1] - m[i, y - 1, x + 1] + m[i, y - 1, x - 1])
    dxs = 0.25 * (m[i + 1, y, x + 1] - m[i + 1, y, x - 1] - m[i - 1, y, x + 1] + m[i - 1, y, x - 1])
    dys = 0.25 * (m[i + 1, y + 1, x] - m[i + 1, y - 1, x] - m[i - 1, y + 1, x] + m[i - 1, y - 1, x])
    hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
    try:
        off = -np.linalg.solve(hess, g)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.abs(off) >= 0.5):
        return None
    return off


def detect_keypoints(img: GrayImage, threshold: float = DEFAULT_THRESHOLD, octaves: int = DEFAULT_OCTAVES,
                     max_keypoints: int = MAX_KEYPOINTS) -> List[Keypoint]:
    """Detect blob-like interest points, strongest first."""
    if img.width < MIN_IMAGE_SIZE or img.height < MIN_IMAGE_SIZE:
        raise ImageTooSmall(f"image is {img.width}x{img.height}, need at least {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    if not 1 <= octaves <= 4:
        raise ValueError("octaves must be in 1..4")
    p = _padded_integral(img.data)
    h, w = img.height, img.width
    pad = filter_sizes(octaves - 1)[-1] + 1
    pe = np.pad(p, pad, mode="edge")
    found = []
    for o in range(octaves):
        step = 2 ** o
        sizes = filter_sizes(o)
        rows = np.arange(0, h, step)
        cols = np.arange(0, w, step)
        stack = np.stack([hessian_response(p, step, s, pe, pad) for s in sizes])
        # candidates must have every neighbour of the coarsest layer inside the image
        bt = (sizes[-1] - 1) // 2
        rv = (rows - step >= bt) & (rows + step <= h - 1 - bt)
        cv = (cols - step >= bt) & (cols + step <= w - 1 - bt)
        inner = rv[:, None] & cv[None, :]
        peak = maximum_filter(stack, size=3, mode="constant", cval=-np.inf)
        for i in (1, 2):
            cand = inner & (stack[i] > threshold) & (stack[i] >= peak[i])
            for y, x in zip(*np.nonzero(cand)):
                off = _refine(stack, i, y, x)
                if off is None:
                    continue
                u = (cols[x] + off[0] * step)
                v = (rows[y] + off[1] * step)
                size = sizes[i] + off[2] * (sizes[i + 1] - sizes[i])
                if not (0 <= u < w and 0 <= v < h):
                    continue
                found.append(Keypoint(float(u), float(v), float(1.2 / 9.0 * size), float(stack[i, y, x])))
    found.sort(key=lambda k: (-k.response, k.v, k.u, k.scale))
    return _suppress_octave_duplicates(found)[:max_keypoints]


def _suppress_octave_duplicates(kps: List[Keypoint]) -> List[Keypoint]:
    """Drop weaker detections of the same blob found again in a neighbouring octave.

    Adjacent octaves overlap in filter size, so one blob can peak in both.
    ``kps`` must be sorted strongest first.
    """
    kept: List[Keypoint] = []
    if not kps:
        return kept
    pos = np.array([[k.u, k.v] for k in kps])
    scale = np.array([k.scale for k in kps])
    alive = np.ones(len(kps), dtype=bool)
    for i, k in enumerate(kps):
        if not alive[i]:
            continue
        kept.append(k)
        rest = np.arange(i + 1, len(kps))
        rest = rest[alive[rest]]
        if len(rest) == 0:
            continue
        d = np.hypot(pos[rest, 0] - k.u, pos[rest, 1] - k.v)
        ratio = np.maximum(scale[rest], k.scale) / np.minimum(scale[rest], k.scale)
        same = (d <= np.maximum(scale[rest], k.scale)) & (ratio <= 1.5)
        alive[rest[same]] = False
    return kept


# descriptor sample grid: 20x20 samples spaced one scale unit apart
_OFFSETS = np.arange(20) - 9.5
_GAUSS = np.exp(-(_OFFSETS[:, None] ** 2 + _OFFSETS[None, :] ** 2) / (2 * 3.3 ** 2))


def _in_margin(kp: Keypoint, w: int, h: int) -> bool:
    m = 10.0 * kp.scale
    return kp.u - m >= 0 and kp.u + m <= w - 1 and kp.v - m >= 0 and kp.v + m <= h - 1


_FLAT_EPS = 1e-9


def _describe_many(p: np.ndarray, kps: List[Keypoint]) -> np.ndarray:
    n = len(kps)
    if n == 0:
        return np.zeros((0, DESCRIPTOR_DIM))
    u = np.array([k.u for k in kps])[:, None, None]
    v = np.array([k.v for k in kps])[:, None, None]
    s = np.array([k.scale for k in kps])[:, None, None]
    xs = np.round(u + _OFFSETS[None, None, :] * s).astype(np.int64)
    ys = np.round(v + _OFFSETS[None, :, None] * s).astype(np.int64)
    half = np.maximum(np.round(s).astype(np.int64), 1)
    size = 2 * half
    dx = _box(p, ys - half, xs, size, half) - _box(p, ys - half, xs - half, size, half)
    dy = _box(p, ys, xs - half, half, size) - _box(p, ys - half, xs - half, half, size)
    norm = _GAUSS[None] / (size * size)
    dx = dx * norm
    dy = dy * norm
    feats = np.stack([dx, dy, np.abs(dx), np.abs(dy)], axis=-1)  # (n, 20, 20, 4)
    # sum 5x5 blocks -> (n, 4, 4, 4), ordered (row block, col block, feature)
    desc = feats.reshape(n, 4, 5, 4, 5, 4).sum(axis=(2, 4)).reshape(n, DESCRIPTOR_DIM)
    lengths = np.linalg.norm(desc, axis=1, keepdims=True)
    # integral-image round-off on textureless patches must not normalise to a unit vector
    return np.divide(desc, lengths, out=np.zeros_like(desc), where=lengths > _FLAT_EPS)


def describe(img: GrayImage, kp: Keypoint) -> Optional[np.ndarray]:
    """64-d upright descriptor of one keypoint; None if it lies too close to the border."""
    if not _in_margin(kp, img.width, img.height):
        return None
    return _describe_many(_padded_integral(img.data), [kp])[0]


def describe_all(img: GrayImage, kps: List[Keypoint]) -> Tuple[List[Keypoint], np.ndarray]:
    """Describe every keypoint with enough margin; returns the kept keypoints and an (n, 64) array."""
    kept = [k for k in kps if _in_margin(k, img.width, img.height)]
    return kept, _describe_many(_padded_integral(img.data), kept)


def extract_features(img: GrayImage, threshold: float = DEFAULT_THRESHOLD, octaves: int = DEFAULT_OCTAVES,
                     max_keypoints: int = MAX_KEYPOINTS) -> Tuple[List[Keypoint], np.ndarray]:
    return describe_all(img, detect_keypoints(img, threshold, octaves, max_keypoints))

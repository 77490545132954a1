"""Rigid transforms, pinhole camera geometry and point/image containers.

Camera frame convention: right-handed, +x right, +y down, +z forward.
Depth value 0 marks an invalid pixel.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import BehindCamera, EmptyCloud, InvalidTransform, NonPositiveDepth

ORTHONORMAL_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """A proper rigid motion ``x -> R x + t`` (the 4x4 ``[R t; 0 1]`` matrix)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidTransform("non-finite transform entries")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHONORMAL_TOL:
            raise InvalidTransform("rotation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise InvalidTransform("rotation is a reflection (det = -1)")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float = 0.0, z: float = 0.0) -> "RigidTransform":
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @classmethod
    def from_axis_angle(cls, axis, degrees: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(axis_angle_matrix(axis, np.deg2rad(degrees)), np.asarray(translation, dtype=np.float64))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64).reshape(4, 4)
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise InvalidTransform("bottom row must be (0, 0, 0, 1)")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def __repr__(self):
        return f"RigidTransform(\n{np.array2string(self.as_matrix(), precision=6)})"


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    k = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def rotation_angle_deg(r: np.ndarray) -> float:
    """Angle of the rotation ``r`` in degrees."""
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Matrix product ``a @ b``: ``b`` is applied first."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(a: RigidTransform) -> RigidTransform:
    rt = a.rotation.T
    return RigidTransform(rt, -rt @ a.translation)


def apply(a: RigidTransform, p):
    """Apply ``a`` to a 3-vector, an (N, 3) array, or a PointCloud."""
    if isinstance(p, PointCloud):
        return PointCloud(apply(a, p.points), p.colors)
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        return a.rotation @ p + a.translation
    return p @ a.rotation.T + a.translation


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


# D415-like VGA stream.
DEFAULT_INTRINSICS = CameraIntrinsics(fx=525.0, fy=525.0, cx=319.5, cy=239.5, width=640, height=480)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        if self.colors is not None:
            col = np.array(self.colors).reshape(-1, 3)
            if len(col) != len(pts):
                raise ValueError("colors and points differ in length")
            if col.min(initial=0) < 0 or col.max(initial=0) > 255:
                raise ValueError("colors must lie in 0..255")
            object.__setattr__(self, "colors", _frozen(col.astype(np.uint8)))

    def __len__(self):
        return len(self.points)

    @property
    def intensity(self) -> Optional[np.ndarray]:
        """Per-point gray level in [0, 1] derived from the colors."""
        if self.colors is None:
            return None
        return rgb_to_gray(self.colors.astype(np.float64) / 255.0)

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.points[idx], None if self.colors is None else self.colors[idx])


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Depth in meters, row-major (height, width); 0 encodes invalid."""

    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError("depth image must be 2-D")
        if not np.all(np.isfinite(d)) or d.min(initial=0) < 0:
            raise ValueError("depth values must be finite and >= 0")
        object.__setattr__(self, "data", _frozen(d))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Intensities in [0, 1], row-major (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        g = np.array(self.data, dtype=np.float64)
        if g.ndim != 2:
            raise ValueError("gray image must be 2-D")
        if not np.all(np.isfinite(g)) or g.min(initial=0) < 0 or g.max(initial=0) > 1:
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(g))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def from_rgb(cls, rgb) -> "GrayImage":
        """Luma conversion of an (H, W, 3) image in [0, 1] or 0..255 (uint8)."""
        rgb = np.asarray(rgb)
        scale = 255.0 if rgb.dtype == np.uint8 else 1.0
        return cls(rgb_to_gray(rgb.astype(np.float64) / scale))


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    return np.clip(rgb @ np.array([0.299, 0.587, 0.114]), 0.0, 1.0)


def back_project(u: float, v: float, z: float, k: CameraIntrinsics) -> np.ndarray:
    if not z > 0:
        raise NonPositiveDepth(f"depth must be positive, got {z}")
    return np.array([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z])


def project(p, k: CameraIntrinsics) -> Tuple[float, float]:
    x, y, z = (float(c) for c in p)
    if not z > 0:
        raise BehindCamera(f"point has z = {z}")
    return k.fx * x / z + k.cx, k.fy * y / z + k.cy


def project_points(pts: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Vectorised projection of (N, 3) points with z > 0 to (N, 2) pixels."""
    pts = np.asarray(pts, dtype=np.float64)
    if np.any(pts[:, 2] <= 0):
        raise BehindCamera("some points have z <= 0")
    return np.stack([k.fx * pts[:, 0] / pts[:, 2] + k.cx, k.fy * pts[:, 1] / pts[:, 2] + k.cy], axis=1)


def centroid(c: PointCloud) -> np.ndarray:
    if len(c) == 0:
        raise EmptyCloud("centroid of an empty cloud")
    return c.points.mean(axis=0)


def depth_to_cloud(depth: DepthImage, k: CameraIntrinsics, gray: Optional[GrayImage] = None) -> PointCloud:
    """Back-project every valid depth pixel; colours come from ``gray`` if given."""
    v, u = np.nonzero(depth.data > 0)
    z = depth.data[v, u]
    pts = np.stack([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z], axis=1)
    colors = None
    if gray is not None:
        g = np.round(gray.data[v, u] * 255).astype(np.uint8)
        colors = np.repeat(g[:, None], 3, axis=1)
    return PointCloud(pts, colors)


def voxel_downsample(cloud: PointCloud, voxel: float) -> PointCloud:
    """Replace the points in each occupied voxel by their mean (colors averaged too)."""
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    n = len(counts)
    sums = np.zeros((n, 3))
    np.add.at(sums, inv, cloud.points)
    colors = None
    if cloud.colors is not None:
        csum = np.zeros((n, 3))
        np.add.at(csum, inv, cloud.colors.astype(np.float64))
        colors = np.round(csum / counts[:, None]).astype(np.uint8)
    return PointCloud(sums / counts[:, None], colors)


def random_subsample(cloud: PointCloud, n: int, seed: int = 0) -> PointCloud:
    """Seeded uniform subsample of at most ``n`` points, original order kept."""
    if len(cloud) <= n:
        return cloud
    idx = np.sort(np.random.default_rng(seed).choice(len(cloud), size=n, replace=False))
    return cloud.subset(idx)

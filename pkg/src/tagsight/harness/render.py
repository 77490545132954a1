"""Z-buffered point splatting of textured clouds into gray + depth images."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import ObjectBehindCamera
from ..geometry import (DEFAULT_INTRINSICS, CameraIntrinsics, DepthImage, GrayImage, PointCloud,
                        RigidTransform, apply, depth_to_cloud, random_subsample)

BACKGROUND = 0.35
BLUR_SIGMA = 0.8
MIN_DEPTH = 0.1
# Registration clouds are random subsets of the back-projected pixels. A voxel
# grid would put scene and template on lattices that trap ICP at lattice shifts.
SCENE_POINTS = 2000
MIN_VISIBLE_POINTS = 100


def render(model: PointCloud, pose: RigidTransform, k: CameraIntrinsics = DEFAULT_INTRINSICS,
           splat: int = 3) -> Tuple[np.ndarray, np.ndarray]:
    """Render ``model`` placed at ``pose``; returns (gray, depth) arrays, depth 0 = empty."""
    pts = apply(pose, model.points)
    if np.any(pts[:, 2] <= MIN_DEPTH):
        raise ObjectBehindCamera(f"object must lie beyond z = {MIN_DEPTH} m")
    inten = model.intensity if model.colors is not None else np.full(len(pts), 0.5)
    u = np.round(k.fx * pts[:, 0] / pts[:, 2] + k.cx).astype(np.int64)
    v = np.round(k.fy * pts[:, 1] / pts[:, 2] + k.cy).astype(np.int64)
    half = splat // 2
    offs = np.arange(-half, half + 1)
    du, dv = np.meshgrid(offs, offs)
    uu = (u[:, None] + du.reshape(1, -1)).reshape(-1)
    vv = (v[:, None] + dv.reshape(1, -1)).reshape(-1)
    zz = np.repeat(pts[:, 2], splat * splat)
    gg = np.repeat(inten, splat * splat)
    ok = (uu >= 0) & (uu < k.width) & (vv >= 0) & (vv < k.height)
    pix = vv[ok] * k.width + uu[ok]
    zz, gg = zz[ok], gg[ok]
    order = np.lexsort((zz, pix))
    pix_s = pix[order]
    first = np.ones(len(pix_s), dtype=bool)
    first[1:] = pix_s[1:] != pix_s[:-1]
    sel = order[first]
    depth = np.zeros(k.width * k.height)
    gray = np.full(k.width * k.height, BACKGROUND)
    depth[pix[sel]] = zz[sel]
    gray[pix[sel]] = gg[sel]
    gray = gaussian_filter(gray.reshape(k.height, k.width), BLUR_SIGMA)
    return np.clip(gray, 0.0, 1.0), depth.reshape(k.height, k.width)


@dataclass
class SyntheticScene:
    gray: GrayImage
    depth: DepthImage
    cloud: PointCloud
    ground_truth: Dict[str, RigidTransform]
    seed: int
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS


def make_scene(model: PointCloud, object_id: str, pose: RigidTransform, noise_sigma: float = 0.0,
               seed: int = 0, k: CameraIntrinsics = DEFAULT_INTRINSICS, n_points: int = SCENE_POINTS) -> SyntheticScene:
    gray, depth = render(model, pose, k)
    rng = np.random.default_rng(seed)
    valid = depth > 0
    if noise_sigma > 0:
        depth = depth + np.where(valid, rng.normal(0.0, noise_sigma, depth.shape), 0.0)
        depth = np.where(valid, np.maximum(depth, 1e-4), 0.0)
    d_img = DepthImage(depth)
    g_img = GrayImage(gray)
    cloud = random_subsample(depth_to_cloud(d_img, k, g_img), n_points, seed)
    if len(cloud) < MIN_VISIBLE_POINTS:
        raise ObjectBehindCamera(f"{object_id} contributes only {len(cloud)} visible points")
    return SyntheticScene(g_img, d_img, cloud, {object_id: pose}, seed, k)


def densest_cloud(obj) -> PointCloud:
    if obj.model_cloud is not None:
        return obj.model_cloud
    return max(obj.viewpoint_clouds, key=len)


def generate_scene(db, object_id: str, pose: RigidTransform, noise_sigma: float = 0.0, seed: int = 0,
                   k: CameraIntrinsics = DEFAULT_INTRINSICS) -> SyntheticScene:
    """Render one database object at ``pose`` (object frame -> camera frame)."""
    obj = next((o for o in db if o.object_id == object_id), None)
    if obj is None:
        raise KeyError(object_id)
    return make_scene(densest_cloud(obj), object_id, pose, noise_sigma, seed, k)


def empty_scene(seed: int, k: CameraIntrinsics = DEFAULT_INTRINSICS, n_points: int = 20) -> SyntheticScene:
    """Uniform-noise image with a sparse random cloud: contains no target."""
    rng = np.random.default_rng(seed)
    gray = GrayImage(rng.random((k.height, k.width)))
    depth = np.zeros((k.height, k.width))
    rr = rng.integers(0, k.height, n_points)
    cc = rng.integers(0, k.width, n_points)
    depth[rr, cc] = rng.uniform(0.5, 2.0, n_points)
    d_img = DepthImage(depth)
    return SyntheticScene(gray, d_img, depth_to_cloud(d_img, k), {}, seed, k)

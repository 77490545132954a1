"""Object pose estimation pipelines and the point-to-point residual metric."""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import EmptyCloud, NoValidDepth, TagsightError
from ..features.matching import (DEFAULT_MIN_MATCHES, DEFAULT_RATIO, Match, TemplateObject, identify)
from ..features.surf import DEFAULT_OCTAVES, DEFAULT_THRESHOLD, Keypoint
from ..geometry import (CameraIntrinsics, DepthImage, GrayImage, PointCloud, RigidTransform, apply,
                        back_project, centroid, compose, random_subsample, voxel_downsample)
from .fpfh import drop_sparse, fpfh
from .icp import IcpParams, icp
from .sacia import SaciaParams, sacia_align
from .spatial import NearestNeighborIndex


class Method(str, enum.Enum):
    LF_ICP = "lf-icp"
    LF_FPFH = "lf-fpfh"
    FPFH_ONLY = "fpfh"


@dataclass(frozen=True)
class PoseEstimate:
    """``m_pose = m_ini @ m_icp`` maps the chosen viewpoint cloud onto the scene."""

    m_ini: RigidTransform
    m_icp: RigidTransform
    m_pose: RigidTransform
    residual: float
    viewpoint_index: int

    @classmethod
    def build(cls, m_ini: RigidTransform, m_icp: RigidTransform, residual: float, viewpoint_index: int):
        return cls(m_ini, m_icp, compose(m_ini, m_icp), residual, viewpoint_index)


@dataclass
class PoseConfig:
    min_matches: int = DEFAULT_MIN_MATCHES
    ratio: float = DEFAULT_RATIO
    detector_threshold: float = DEFAULT_THRESHOLD
    octaves: int = DEFAULT_OCTAVES
    icp: IcpParams = field(default_factory=IcpParams)
    sacia: SaciaParams = field(default_factory=SaciaParams)
    fpfh_voxel: float = 0.005  # m, grid for the FPFH / SAC-IA stage
    sweep_points: int = 200  # template subset used while comparing viewpoints
    seed: int = 0


@dataclass
class PoseResult:
    object_id: str
    object_index: int
    estimate: PoseEstimate
    object_pose: RigidTransform  # object frame -> camera frame
    timings: Dict[str, float]


def residual_error(target: PointCloud, transformed_template: PointCloud) -> float:
    """Mean distance from each target point to its closest transformed-template point."""
    if len(target) == 0 or len(transformed_template) == 0:
        raise EmptyCloud("residual_error needs two non-empty clouds")
    index = NearestNeighborIndex(transformed_template)
    _, idx = index.query(target.points)
    diff = target.points - transformed_template.points[idx]
    d = np.sqrt(np.sum(diff * diff, axis=1))
    return math.fsum(d.tolist()) / len(d)


def init_pose(matches: Sequence[Match], scene_keypoints: Sequence[Keypoint], depth: DepthImage,
              k: CameraIntrinsics, template_cloud: PointCloud) -> RigidTransform:
    """Translate the template centroid onto the back-projected centroid of the matched keypoints."""
    if not matches:
        raise ValueError("init_pose needs at least one match")
    uv = np.array([[scene_keypoints[m.scene_index].u, scene_keypoints[m.scene_index].v] for m in matches])
    cu, cv = uv.mean(axis=0)
    h, w = depth.data.shape
    r = min(max(int(round(cv)), 0), h - 1)
    c = min(max(int(round(cu)), 0), w - 1)
    z = depth.data[r, c]
    if not z > 0:
        rows = np.clip(np.round(uv[:, 1]).astype(int), 0, h - 1)
        cols = np.clip(np.round(uv[:, 0]).astype(int), 0, w - 1)
        vals = depth.data[rows, cols]
        vals = vals[vals > 0]
        if len(vals) == 0:
            raise NoValidDepth("no matched keypoint has a valid depth reading")
        z = float(np.median(vals))
    anchor = back_project(cu, cv, z, k)
    return RigidTransform(np.eye(3), anchor - centroid(template_cloud))


class _Timer:
    def __init__(self):
        self.t: Dict[str, float] = {}

    def add(self, key: str, start: float) -> None:
        self.t[key] = self.t.get(key, 0.0) + time.perf_counter() - start


def _coarse(cloud: PointCloud, cfg: PoseConfig):
    """Voxel-downsampled cloud and its FPFH signatures for the SAC-IA stage."""
    # isolated silhouette points have no usable normal
    small = drop_sparse(voxel_downsample(cloud, cfg.fpfh_voxel), cfg.sacia.normal_radius)
    return small, fpfh(small, cfg.sacia.normal_radius, cfg.sacia.feature_radius)


def _template_coarse(obj: TemplateObject, v: int, cfg: PoseConfig):
    key = ("fpfh", v, cfg.fpfh_voxel, cfg.sacia.normal_radius, cfg.sacia.feature_radius)
    if key not in obj.cache:
        # viewpoint clouds live in their capture camera frame, so the sensor sits at the origin
        obj.cache[key] = _coarse(obj.viewpoint_clouds[v], cfg)
    return obj.cache[key]


def _sacia(obj: TemplateObject, v: int, scene_small: PointCloud, scene_feats: np.ndarray,
           scene_small_index: NearestNeighborIndex, cfg: PoseConfig, timer: "_Timer"):
    t0 = time.perf_counter()
    small, feats = _template_coarse(obj, v, cfg)
    timer.add("fpfh", t0)
    t0 = time.perf_counter()
    out = sacia_align(small, scene_small, cfg.sacia.n_samples, cfg.sacia.iterations, cfg.seed + v,
                      cfg.sacia, feats, scene_feats, scene_small_index)
    timer.add("sacia", t0)
    return out


def _sweep_cloud(obj: TemplateObject, v: int, cfg: PoseConfig) -> PointCloud:
    key = ("sweep", v, cfg.sweep_points)
    if key not in obj.cache:
        obj.cache[key] = random_subsample(obj.viewpoint_clouds[v], cfg.sweep_points, seed=v)
    return obj.cache[key]


def _refine(cloud: PointCloud, scene: PointCloud, index: NearestNeighborIndex, m_ini: RigidTransform,
            cfg: PoseConfig, v: int, timer: _Timer) -> PoseEstimate:
    t0 = time.perf_counter()
    res = icp(cloud, scene, m_ini, cfg.icp, index)
    timer.add("icp", t0)
    t0 = time.perf_counter()
    est = PoseEstimate.build(m_ini, res.transform, 0.0, v)
    err = residual_error(scene, apply(est.m_pose, cloud))
    timer.add("residual", t0)
    return PoseEstimate(est.m_ini, est.m_icp, est.m_pose, err, v)


def _polish(est: PoseEstimate, obj: TemplateObject, scene: PointCloud, index: NearestNeighborIndex,
            cfg: PoseConfig, timer: _Timer) -> PoseEstimate:
    """Final ICP pass with the full viewpoint cloud, continuing from ``est``."""
    cloud = obj.viewpoint_clouds[est.viewpoint_index]
    t0 = time.perf_counter()
    res = icp(cloud, scene, est.m_pose, cfg.icp, index)
    timer.add("icp", t0)
    t0 = time.perf_counter()
    m_icp = compose(est.m_icp, res.transform)
    final = PoseEstimate.build(est.m_ini, m_icp, 0.0, est.viewpoint_index)
    err = residual_error(scene, apply(final.m_pose, cloud))
    timer.add("residual", t0)
    return PoseEstimate(final.m_ini, final.m_icp, final.m_pose, err, est.viewpoint_index)


def _best_over_viewpoints(candidates: List[PoseEstimate], errors: List[Exception]) -> PoseEstimate:
    if not candidates:
        raise errors[-1]
    return min(candidates, key=lambda e: (e.residual, e.viewpoint_index))


def estimate_pose(method, scene_img: Optional[GrayImage], depth: Optional[DepthImage], k: Optional[CameraIntrinsics],
                  scene_cloud: PointCloud, db: Sequence[TemplateObject],
                  config: Optional[PoseConfig] = None) -> Optional[PoseResult]:
    """Identify the in-view object and estimate its pose with one of three pipelines.

    ``lf-icp``: feature identification, centroid initialisation, ICP over every
    viewpoint cloud of the winner (lowest residual kept).
    ``lf-fpfh``: feature identification, then SAC-IA + ICP per viewpoint cloud.
    ``fpfh``: SAC-IA against every viewpoint of every object; best fitness
    wins and is refined with ICP.
    Returns None when feature identification rejects the scene.
    """
    method = Method(method)
    cfg = config or PoseConfig()
    timer = _Timer()
    if len(scene_cloud) < 3:
        if method is Method.FPFH_ONLY:
            raise EmptyCloud("scene cloud has fewer than 3 points")
        scene_cloud = None
    t0 = time.perf_counter()
    index = NearestNeighborIndex(scene_cloud) if scene_cloud is not None else None
    timer.add("index", t0)

    if method in (Method.LF_ICP, Method.LF_FPFH):
        t0 = time.perf_counter()
        ident = identify(scene_img, db, cfg.min_matches, cfg.ratio, cfg.detector_threshold, cfg.octaves)
        timer.add("identify", t0)
        if ident is None or scene_cloud is None:
            return None
        obj = db[ident.object_index]
        candidates, errors = [], []
        if method is Method.LF_ICP:
            for v, cloud in enumerate(obj.viewpoint_clouds):
                t0 = time.perf_counter()
                m_ini = init_pose(ident.matches, ident.scene_keypoints, depth, k, cloud)
                timer.add("init", t0)
                try:
                    candidates.append(_refine(_sweep_cloud(obj, v, cfg), scene_cloud, index, m_ini, cfg, v, timer))
                except TagsightError as exc:
                    errors.append(exc)
        else:
            t0 = time.perf_counter()
            scene_small, scene_feats = _coarse(scene_cloud, cfg)
            small_index = NearestNeighborIndex(scene_small)
            timer.add("fpfh", t0)
            for v in range(len(obj.viewpoint_clouds)):
                try:
                    m_ini, _ = _sacia(obj, v, scene_small, scene_feats, small_index, cfg, timer)
                    candidates.append(_refine(_sweep_cloud(obj, v, cfg), scene_cloud, index, m_ini, cfg, v, timer))
                except TagsightError as exc:
                    errors.append(exc)
        est = _polish(_best_over_viewpoints(candidates, errors), obj, scene_cloud, index, cfg, timer)
        oi = ident.object_index
    else:
        t0 = time.perf_counter()
        scene_small, scene_feats = _coarse(scene_cloud, cfg)
        small_index = NearestNeighborIndex(scene_small)
        timer.add("fpfh", t0)
        best = None
        errors = []
        for oi_, obj in enumerate(db):
            for v in range(len(obj.viewpoint_clouds)):
                try:
                    tr, fit = _sacia(obj, v, scene_small, scene_feats, small_index, cfg, timer)
                except TagsightError as exc:
                    errors.append(exc)
                    continue
                if best is None or fit < best[0]:
                    best = (fit, oi_, v, tr)
        if best is None:
            raise errors[-1]
        _, oi, v, m_ini = best
        obj = db[oi]
        est = _refine(obj.viewpoint_clouds[v], scene_cloud, index, m_ini, cfg, v, timer)

    obj = db[oi]
    pose = compose(est.m_pose, obj.viewpoint_poses[est.viewpoint_index])
    timer.t["total"] = sum(timer.t.values())
    return PoseResult(obj.object_id, oi, est, pose, timer.t)

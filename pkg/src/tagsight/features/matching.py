"""Descriptor matching and match-count object identification."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import EmptyDatabase
from ..geometry import GrayImage, PointCloud, RigidTransform
from .surf import DEFAULT_OCTAVES, DEFAULT_THRESHOLD, Keypoint, extract_features

DEFAULT_RATIO = 0.7
DEFAULT_MIN_MATCHES = 12


@dataclass(frozen=True)
class Match:
    scene_index: int
    template_index: int
    distance: float


@dataclass
class TemplateImage:
    """A template view with its keypoints and (float32-quantised) descriptors."""

    image: GrayImage
    keypoints: List[Keypoint]
    descriptors: np.ndarray

    @classmethod
    def from_image(cls, image: GrayImage, threshold: float = DEFAULT_THRESHOLD,
                   octaves: int = DEFAULT_OCTAVES) -> "TemplateImage":
        kps, desc = extract_features(image, threshold, octaves)
        # descriptors are stored as float32 on disk; quantise here too so
        # in-memory and reloaded databases behave identically
        return cls(image, kps, desc.astype(np.float32).astype(np.float64))


@dataclass
class TemplateObject:
    """Database entry: feature images plus point clouds captured from several viewpoints.

    ``viewpoint_poses[i]`` maps object coordinates into the frame of
    ``viewpoint_clouds[i]`` (the camera frame it was captured in), so an
    estimated cloud-to-scene transform ``M`` gives the object pose
    ``M @ viewpoint_poses[i]``.
    """

    object_id: str
    template_images: List[TemplateImage]
    viewpoint_clouds: List[PointCloud]
    epc_bindings: List[int] = field(default_factory=list)
    viewpoint_poses: List[RigidTransform] = field(default_factory=list)
    model_cloud: Optional[PointCloud] = None
    symmetry_axis: Optional[tuple] = None
    rig: Dict[str, object] = field(default_factory=dict)
    model_ref: str = ""
    cache: Dict[object, object] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.template_images or not self.viewpoint_clouds:
            raise ValueError(f"{self.object_id}: needs at least one template image and one viewpoint cloud")
        if not self.viewpoint_poses:
            self.viewpoint_poses = [RigidTransform.identity() for _ in self.viewpoint_clouds]
        if len(self.viewpoint_poses) != len(self.viewpoint_clouds):
            raise ValueError(f"{self.object_id}: one viewpoint pose per viewpoint cloud")


@dataclass
class Identification:
    object_id: str
    object_index: int
    template_image_index: int
    matches: List[Match]
    scene_keypoints: List[Keypoint]

    @property
    def count(self) -> int:
        return len(self.matches)


def match_descriptors(scene: np.ndarray, templ: np.ndarray, ratio: float = DEFAULT_RATIO) -> List[Match]:
    """Nearest-neighbour matches that pass the distance-ratio test.

    Matching is one-to-one: when several scene descriptors pick the same
    template descriptor only the closest keeps it (ties: lowest scene
    index). Without this, texture-free noise, whose descriptors all look
    alike, piles dozens of matches onto a single template keypoint.
    """
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    scene = np.asarray(scene, dtype=np.float64).reshape(-1, 64)
    templ = np.asarray(templ, dtype=np.float64).reshape(-1, 64)
    if len(scene) == 0 or len(templ) < 2:
        return []
    d = cdist(scene, templ)
    order = np.argpartition(d, 1, axis=1)[:, :2]
    rows = np.arange(len(scene))
    d0 = d[rows, order[:, 0]]
    d1 = d[rows, order[:, 1]]
    swap = d1 < d0
    best = np.where(swap, order[:, 1], order[:, 0])
    first = np.minimum(d0, d1)
    second = np.maximum(d0, d1)
    ok = np.nonzero(first < ratio * second)[0]
    # lexsort is stable: per template index, the closest scene row comes first
    ok = ok[np.lexsort((ok, first[ok], best[ok]))]
    _, keep = np.unique(best[ok], return_index=True)
    return [Match(int(i), int(best[i]), float(first[i])) for i in np.sort(ok[keep])]


def identify(scene_img: GrayImage, db: Sequence[TemplateObject], min_matches: int = DEFAULT_MIN_MATCHES,
             ratio: float = DEFAULT_RATIO, threshold: float = DEFAULT_THRESHOLD,
             octaves: int = DEFAULT_OCTAVES, scene_features=None) -> Optional[Identification]:
    """Pick the (object, template image) pair with the most ratio-test matches.

    Ties go to the smaller mean match distance, then the lower object and
    image index. Returns None when the best count is below ``min_matches``.
    """
    if not db:
        raise EmptyDatabase("template database is empty")
    if min_matches < 1:
        raise ValueError("min_matches must be >= 1")
    if scene_features is None:
        scene_features = extract_features(scene_img, threshold, octaves)
    kps, desc = scene_features
    best = None
    best_key = None
    for oi, obj in enumerate(db):
        for ii, timg in enumerate(obj.template_images):
            matches = match_descriptors(desc, timg.descriptors, ratio)
            if not matches:
                continue
            mean_d = float(np.mean([m.distance for m in matches]))
            key = (-len(matches), mean_d, oi, ii)
            if best_key is None or key < best_key:
                best_key = key
                best = (oi, ii, matches)
    if best is None or len(best[2]) < min_matches:
        return None
    oi, ii, matches = best
    return Identification(db[oi].object_id, oi, ii, matches, list(kps))


def match_counts(scene_img: GrayImage, db: Sequence[TemplateObject], ratio: float = DEFAULT_RATIO,
                 threshold: float = DEFAULT_THRESHOLD, octaves: int = DEFAULT_OCTAVES) -> Dict[str, int]:
    """Best match count per object (used for working-range measurements)."""
    _, desc = extract_features(scene_img, threshold, octaves)
    return {obj.object_id: max(len(match_descriptors(desc, t.descriptors, ratio)) for t in obj.template_images)
            for obj in db}

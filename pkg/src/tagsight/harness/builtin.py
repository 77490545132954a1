"""Template database for the three generated desk objects."""
from __future__ import annotations

from typing import Dict, List, Optional, Sequence

from ..features.matching import TemplateImage, TemplateObject
from ..rfid.sensors import WaterLevel
from ..rfid.tags import TagPopulation, TagRecord
from ..geometry import (DEFAULT_INTRINSICS, CameraIntrinsics, DepthImage, GrayImage, RigidTransform,
                        depth_to_cloud, random_subsample)
from .objects import BUILTIN_OBJECTS, ObjectSpec, build_model
from .render import render

VIEW_STEP_DEG = 10
CAPTURE_DISTANCE = 0.4  # m
TEMPLATE_POINTS = 1000  # per viewpoint cloud

# Tag rig of the mug: three level tags up the side (A top, C bottom) plus a
# temperature tag. Bottle and cup carry one identification tag each.
MUG_WATER_EPCS = {"A": 0xE2801160_0000_0000_0000_A001, "B": 0xE2801160_0000_0000_0000_A002,
                  "C": 0xE2801160_0000_0000_0000_A003}
MUG_TEMP_EPC = 0xE2801160_0000_0000_0000_7E01
BUILTIN_EPCS: Dict[str, List[int]] = {
    "bottle": [0xE2801160_0000_0000_0000_B001],
    "cup": [0xE2801160_0000_0000_0000_C001],
    "mug": [*MUG_WATER_EPCS.values(), MUG_TEMP_EPC],
}
BUILTIN_RIGS: Dict[str, Dict[str, object]] = {
    "mug": {"water": dict(MUG_WATER_EPCS), "temperature": MUG_TEMP_EPC},
}


def viewpoint_pose(yaw_deg: float, distance: float = CAPTURE_DISTANCE) -> RigidTransform:
    """Object-to-camera pose of a capture: object turned by ``yaw_deg`` about its axis, ``distance`` ahead."""
    return RigidTransform.from_axis_angle((0.0, 1.0, 0.0), yaw_deg, (0.0, 0.0, distance))


def build_object(spec: ObjectSpec, step_deg: int = VIEW_STEP_DEG, distance: float = CAPTURE_DISTANCE,
                 template_points: int = TEMPLATE_POINTS, k: CameraIntrinsics = DEFAULT_INTRINSICS,
                 epc_bindings: Sequence[int] = (), rig: Optional[Dict[str, object]] = None) -> TemplateObject:
    """Capture feature images and viewpoint clouds all around ``spec``.

    Each viewpoint cloud is a seeded random subset of the back-projected
    capture, kept in that capture's camera frame.
    """
    if not 0 < step_deg <= 360:
        raise ValueError("step_deg must lie in (0, 360]")
    model = build_model(spec)
    images, clouds, poses = [], [], []
    for yaw in range(0, 360, step_deg):
        pose = viewpoint_pose(yaw, distance)
        gray, depth = render(model, pose, k)
        g = GrayImage(gray)
        images.append(TemplateImage.from_image(g))
        clouds.append(random_subsample(depth_to_cloud(DepthImage(depth), k, g), template_points, seed=yaw))
        poses.append(pose)
    return TemplateObject(spec.object_id, images, clouds, list(epc_bindings), poses, model,
                          spec.symmetry_axis, dict(rig or {}), model_ref=f"builtin:{spec.object_id}")


def builtin_database(step_deg: int = VIEW_STEP_DEG, k: CameraIntrinsics = DEFAULT_INTRINSICS,
                     objects: Sequence[ObjectSpec] = BUILTIN_OBJECTS) -> List[TemplateObject]:
    return [build_object(s, step_deg, k=k, epc_bindings=BUILTIN_EPCS.get(s.object_id, ()),
                         rig=BUILTIN_RIGS.get(s.object_id)) for s in objects]


# tags that answer in each level state; the others are detuned by the water behind them
_WATER_RESPONDERS = {
    WaterLevel.EMPTY: {"B", "C"},
    WaterLevel.MIDDLE: {"C"},
    WaterLevel.FULL: set(),
}


def builtin_tag_population(water_level: WaterLevel = WaterLevel.MIDDLE, ambient_celsius: float = 22.5,
                           mug_position: Sequence[float] = (0.0, 0.0, 0.5)) -> TagPopulation:
    """Tags of the built-in objects placed in front of a reader antenna at the origin."""
    if water_level not in _WATER_RESPONDERS:
        raise ValueError(f"no tag state produces water level {water_level.value!r}")
    mx, my, mz = (float(c) for c in mug_position)
    tags = [TagRecord(BUILTIN_EPCS["bottle"][0], (-0.25, 0.0, 0.6)),
            TagRecord(BUILTIN_EPCS["cup"][0], (0.25, 0.0, 0.6))]
    for i, (name, epc) in enumerate(sorted(MUG_WATER_EPCS.items())):
        tags.append(TagRecord(epc, (mx + 0.04, my - 0.03 + 0.03 * i, mz),
                              water_detuned=name not in _WATER_RESPONDERS[water_level]))
    tags.append(TagRecord(MUG_TEMP_EPC, (mx - 0.04, my, mz), has_temperature_ic=True,
                          ambient_celsius=ambient_celsius))
    return TagPopulation(tags)

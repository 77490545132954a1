from .bench import ALL_METHODS, BenchReport, BenchRow, bench_pose, pose_errors, run_benchmark
from .builtin import (BUILTIN_EPCS, MUG_TEMP_EPC, MUG_WATER_EPCS, build_object, builtin_database,
                      builtin_tag_population, viewpoint_pose)
from .objects import BUILTIN_OBJECTS, ObjectSpec, build_model
from .render import SyntheticScene, empty_scene, generate_scene, make_scene, render
from .sweep import RenderedVisionModel, SweepResult, rfid_score, safe_ranges, working_range_sweep

__all__ = [
    "ALL_METHODS", "BUILTIN_EPCS", "BUILTIN_OBJECTS", "BenchReport", "BenchRow", "MUG_TEMP_EPC", "MUG_WATER_EPCS",
    "ObjectSpec", "RenderedVisionModel", "SweepResult", "SyntheticScene", "bench_pose", "build_model",
    "build_object", "builtin_database", "builtin_tag_population", "empty_scene", "generate_scene", "make_scene",
    "pose_errors", "render", "rfid_score", "run_benchmark", "safe_ranges", "viewpoint_pose",
    "working_range_sweep",
]

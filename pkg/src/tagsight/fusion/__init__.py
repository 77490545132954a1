from .registry import (POSE_TTL_US, SENSOR_TTL_US, AugmentedAnnotation, CalibrationSet, ObjectRegistryEntry, Registry,
                       VisionEvent, to_ndjson, to_world_pose)
from .server import AnnotationServer, Frame, ServerConfig, fetch_annotations, poll_rfid, run_fusion

__all__ = [
    "AnnotationServer", "AugmentedAnnotation", "CalibrationSet", "Frame", "ObjectRegistryEntry", "POSE_TTL_US",
    "Registry", "SENSOR_TTL_US", "ServerConfig", "VisionEvent", "fetch_annotations", "poll_rfid", "run_fusion",
    "to_ndjson", "to_world_pose",
]

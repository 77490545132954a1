from .matching import (DEFAULT_MIN_MATCHES, DEFAULT_RATIO, Identification, Match, TemplateImage,
                       TemplateObject, identify, match_counts, match_descriptors)
from .surf import Keypoint, box_sum, describe, describe_all, detect_keypoints, extract_features, integral_image

__all__ = [
    "DEFAULT_MIN_MATCHES", "DEFAULT_RATIO", "Identification", "Keypoint", "Match", "TemplateImage",
    "TemplateObject", "box_sum", "describe", "describe_all", "detect_keypoints", "extract_features",
    "identify", "integral_image", "match_counts", "match_descriptors",
]

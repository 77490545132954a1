from .fpfh import drop_sparse, estimate_normals, fpfh
from .icp import IcpParams, IcpResult, icp
from .kabsch import kabsch_batch, kabsch_solve
from .pose import (Method, PoseConfig, PoseEstimate, PoseResult, estimate_pose, init_pose,
                   residual_error)
from .sacia import SaciaParams, sacia_align
from .spatial import NearestNeighborIndex, nearest_neighbor_index

__all__ = [
    "IcpParams", "IcpResult", "Method", "NearestNeighborIndex", "PoseConfig", "PoseEstimate", "PoseResult",
    "SaciaParams", "drop_sparse", "estimate_normals", "estimate_pose", "fpfh", "icp", "init_pose", "kabsch_batch",
    "kabsch_solve", "nearest_neighbor_index", "residual_error", "sacia_align",
]

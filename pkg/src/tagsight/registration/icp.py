"""Point-to-point ICP with median-based correspondence rejection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import AllCorrespondencesRejected
from ..geometry import PointCloud, RigidTransform, apply, compose, invert
from .kabsch import kabsch_solve
from .spatial import NearestNeighborIndex


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    mse_delta_tolerance: float = 1e-10  # m^2
    correspondence_reject_multiplier: float = 2.5

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.mse_delta_tolerance > 0 and self.correspondence_reject_multiplier > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class IcpResult:
    transform: RigidTransform  # incremental: compose(init, transform) is the full pose
    residual: float  # RMS distance over accepted correspondences at the last step
    iterations: int
    mse_history: List[float] = field(default_factory=list)

    def __iter__(self):
        return iter((self.transform, self.residual, self.iterations))


def icp(template: PointCloud, scene: PointCloud, init: Optional[RigidTransform] = None,
        params: IcpParams = IcpParams(), scene_index: Optional[NearestNeighborIndex] = None) -> IcpResult:
    """Align ``template`` onto ``scene`` starting from ``init``.

    Correspondences run template -> scene. Pairs farther than
    ``correspondence_reject_multiplier`` times the median pair distance are
    dropped before each rigid solve. Stops once the MSE changes by less than
    ``mse_delta_tolerance`` or after ``max_iterations``. Should a step raise
    the MSE over the accepted pairs, that step is undone and the loop ends,
    so ``mse_history`` never increases.
    """
    if len(template) < 3 or len(scene) < 3:
        raise ValueError("icp needs at least 3 points in each cloud")
    init = init or RigidTransform.identity()
    index = scene_index or NearestNeighborIndex(scene)
    src = template.points
    current = previous = init
    history: List[float] = []
    it = 0
    for it in range(1, params.max_iterations + 1):
        moved = apply(current, src)
        dist, idx = index.query(moved)
        keep = dist <= params.correspondence_reject_multiplier * np.median(dist)
        if keep.sum() < 3:
            raise AllCorrespondencesRejected(f"only {int(keep.sum())} correspondences survived rejection")
        mse = float(np.mean(dist[keep] ** 2))
        if history and mse > history[-1]:
            # the accepted set shifted and the trimmed MSE went up: keep the better estimate
            current = previous
            break
        history.append(mse)
        if len(history) > 1 and history[-2] - mse < params.mse_delta_tolerance:
            break
        step = kabsch_solve(moved[keep], index.points[idx[keep]])
        previous, current = current, compose(step, current)
    return IcpResult(compose(invert(init), current), float(np.sqrt(history[-1])), it, history)

"""Exact nearest-neighbour index over a point cloud (backed by scipy's k-d tree)."""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import EmptyCloud
from ..geometry import PointCloud


class NearestNeighborIndex:
    """Read-only after construction, so it can be shared between threads."""

    def __init__(self, points):
        pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
        if len(pts) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self):
        return len(self.points)

    def query(self, queries, k: int = 1, distance_upper_bound: float = np.inf):
        """Distances and indices of the ``k`` nearest indexed points.

        Neighbours beyond ``distance_upper_bound`` come back as distance inf
        and index ``len(self)``.
        """
        return self._tree.query(np.asarray(queries, dtype=np.float64), k=k,
                                distance_upper_bound=distance_upper_bound)

    def nearest(self, q):
        d, i = self._tree.query(np.asarray(q, dtype=np.float64))
        return self.points[i], float(d)

    def radius(self, queries, r: float):
        return self._tree.query_ball_point(np.asarray(queries, dtype=np.float64), r)

    def radius_count(self, queries, r: float) -> np.ndarray:
        return np.asarray(self._tree.query_ball_point(np.asarray(queries, dtype=np.float64), r,
                                                      return_length=True))


def nearest_neighbor_index(cloud: PointCloud) -> NearestNeighborIndex:
    return NearestNeighborIndex(cloud)

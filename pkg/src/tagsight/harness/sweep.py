"""Working-range sweep: tag signal score and identification quality against distance."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..features.matching import DEFAULT_RATIO, TemplateObject, match_counts
from ..geometry import DEFAULT_INTRINSICS, CameraIntrinsics, GrayImage
from ..rfid.channel import ChannelParams, backscatter_rssi, normalized_rssi, tag_respond
from ..rfid.tags import TagRecord
from .bench import bench_pose
from .render import densest_cloud, render

SAFE_SCORE = 0.5
CSV_HEADER = ("distance_m", "rfid_score", "vision_score")


class RenderedVisionModel:
    """Raw match count of ``object_id`` on a render at a given distance.

    Quality is measured, not modelled: each call renders the object and
    runs the feature matcher against the database.
    """

    def __init__(self, db: Sequence[TemplateObject], object_id: str, yaw_deg: float = 0.0,
                 k: CameraIntrinsics = DEFAULT_INTRINSICS, ratio: float = DEFAULT_RATIO):
        self.db = list(db)
        self.obj = next(o for o in self.db if o.object_id == object_id)
        self.yaw_deg = yaw_deg
        self.k = k
        self.ratio = ratio

    def __call__(self, distance: float) -> float:
        gray, _ = render(densest_cloud(self.obj), bench_pose(self.yaw_deg, distance), self.k)
        return float(match_counts(GrayImage(gray), self.db, self.ratio)[self.obj.object_id])


def rfid_score(distance: float, channel: ChannelParams = ChannelParams(), tag: Optional[TagRecord] = None) -> float:
    """Normalised RSSI of a responsive passive tag; 0 once the tag falls silent."""
    tag = tag or TagRecord(0)
    if tag_respond(tag, distance, channel) is None:
        return 0.0
    return normalized_rssi(backscatter_rssi(distance, channel))


def safe_ranges(distances: Sequence[float], scores: Sequence[float],
                level: float = SAFE_SCORE) -> List[Tuple[float, float]]:
    """Maximal runs of consecutive samples scoring at least ``level``, as (first, last) distance."""
    out = []
    start = None
    for i, (d, s) in enumerate(zip(distances, scores)):
        if s >= level:
            if start is None:
                start = d
            end = d
        elif start is not None:
            out.append((start, end))
            start = None
    if start is not None:
        out.append((start, end))
    return out


@dataclass
class SweepResult:
    rows: List[Tuple[float, float, float]]
    rfid_safe: List[Tuple[float, float]]
    vision_safe: List[Tuple[float, float]]

    @property
    def distances(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def rfid_scores(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def vision_scores(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    def vision_peak(self) -> float:
        return float(self.distances[int(np.argmax(self.vision_scores))])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for d, r, v in self.rows:
            w.writerow([f"{d:.4f}", f"{r:.6f}", f"{v:.6f}"])
        return buf.getvalue()


def working_range_sweep(channel: ChannelParams, camera_quality_model: Callable[[float], float],
                        d_min: float, d_max: float, steps: int) -> SweepResult:
    """Score both modalities at ``steps`` evenly spaced distances.

    The vision score is the raw quality divided by its best value over the
    sweep, clamped to [0, 1].
    """
    if not 0 < d_min < d_max:
        raise ValueError("need 0 < d_min < d_max")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    ds = np.linspace(d_min, d_max, steps)
    rf = [rfid_score(float(d), channel) for d in ds]
    raw = np.array([float(camera_quality_model(float(d))) for d in ds])
    peak = raw.max()
    vis = np.clip(raw / peak, 0.0, 1.0) if peak > 0 else np.zeros_like(raw)
    rows = [(float(d), float(r), float(v)) for d, r, v in zip(ds, rf, vis)]
    return SweepResult(rows, safe_ranges(ds.tolist(), rf), safe_ranges(ds.tolist(), vis.tolist()))

"""Log-distance backscatter model and the tag response gate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..errors import NonPositiveDistance

SCORE_CEILING_DBM = -20.0  # normalised score 1
SCORE_FLOOR_DBM = -80.0  # normalised score 0


@dataclass(frozen=True)
class ChannelParams:
    tx_eirp: float = 36.0  # dBm
    antenna_gain: float = 8.5  # dBi
    reference_rssi_at_1m: float = -40.0  # dBm, round-trip loss folded in
    path_loss_exponent: float = 2.0
    reader_sensitivity: float = -80.0  # dBm
    tag_wakeup_threshold_distance: float = 1.5  # m, passive power-up limit

    def __post_init__(self):
        if not self.path_loss_exponent > 0:
            raise ValueError("path_loss_exponent must be positive")
        if not self.reader_sensitivity < self.reference_rssi_at_1m:
            raise ValueError("reader_sensitivity must lie below reference_rssi_at_1m")
        if not self.tag_wakeup_threshold_distance > 0:
            raise ValueError("tag_wakeup_threshold_distance must be positive")


@dataclass(frozen=True)
class ReadEvent:
    epc: int
    rssi: float  # dBm
    antenna_id: int
    timestamp: int  # microseconds since epoch

    def __post_init__(self):
        if not self.rssi <= 0:
            raise ValueError(f"backscatter rssi must be <= 0 dBm, got {self.rssi}")


def backscatter_rssi(distance: float, p: ChannelParams = ChannelParams()) -> float:
    if not distance > 0:
        raise NonPositiveDistance(f"distance must be positive, got {distance}")
    return p.reference_rssi_at_1m - 10.0 * p.path_loss_exponent * math.log10(distance)


def normalized_rssi(rssi: float) -> float:
    """Linear map of -80..-20 dBm onto 0..1, clamped."""
    score = (rssi - SCORE_FLOOR_DBM) / (SCORE_CEILING_DBM - SCORE_FLOOR_DBM)
    return min(max(score, 0.0), 1.0)


def tag_respond(tag, distance: float, p: ChannelParams = ChannelParams(), now: int = 0,
                antenna_id: int = 0) -> Optional[ReadEvent]:
    """Read event for ``tag`` seen from ``distance`` meters, or None if it stays silent.

    A detuned tag never answers. A passive tag beyond the wake-up distance
    cannot power up; battery-assisted tags skip that gate. Replies below
    the reader sensitivity are lost.
    """
    rssi = backscatter_rssi(distance, p)
    if tag.water_detuned:
        return None
    if distance > p.tag_wakeup_threshold_distance and not tag.battery_assisted:
        return None
    if rssi < p.reader_sensitivity:
        return None
    # within a centimetre the model would exceed 0 dBm; the reply can never beat the carrier
    return ReadEvent(tag.epc, min(rssi, 0.0), antenna_id, now)

"""Tag-sensor decoders: water level from a three-tag rig and the temperature word."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

TEMP_MIN = -64.0
TEMP_MAX = 64.0
TEMP_STEP = 0.25
TEMP_BANK = 3
TEMP_WORDPTR = 256


class WaterLevel(str, enum.Enum):
    EMPTY = "empty"
    MIDDLE = "middle"
    FULL = "full"
    UNKNOWN = "unknown"


# (A, B, C) responded flags; A sits highest on the container.
_WATER_TABLE = {
    (False, True, True): WaterLevel.EMPTY,
    (False, False, True): WaterLevel.MIDDLE,
    (False, False, False): WaterLevel.FULL,
}


def decode_water_level(a: bool, b: bool, c: bool) -> WaterLevel:
    return _WATER_TABLE.get((bool(a), bool(b), bool(c)), WaterLevel.UNKNOWN)


@dataclass(frozen=True)
class TemperatureReading:
    celsius: float
    epc: int
    timestamp: int  # microseconds

    def __post_init__(self):
        if not TEMP_MIN <= self.celsius <= TEMP_MAX:
            raise ValueError(f"temperature {self.celsius} outside [{TEMP_MIN}, {TEMP_MAX}]")


def encode_temp_word(celsius: float) -> int:
    """Clamp to the sensor range, round to 0.25 degC, store quarter-degrees as a 16-bit two's complement word."""
    if math.isnan(celsius):
        raise ValueError("temperature is NaN")
    clamped = min(max(celsius, TEMP_MIN), TEMP_MAX)
    return int(round(clamped / TEMP_STEP)) & 0xFFFF


def decode_temp_word(word: int) -> float:
    if not 0 <= word <= 0xFFFF:
        raise ValueError(f"not a 16-bit word: {word}")
    quarters = word - 0x10000 if word & 0x8000 else word
    celsius = quarters * TEMP_STEP
    if not TEMP_MIN <= celsius <= TEMP_MAX:
        raise ValueError(f"word 0x{word:04x} decodes to {celsius} degC, outside the sensor range")
    return celsius

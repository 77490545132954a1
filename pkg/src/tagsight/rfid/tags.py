"""Simulated tag population with Gen2-style memory banks and a JSON config format.

Config layout::

    {"tags": [{"epc": "<24 hex digits>", "position": [x, y, z],
               "has_temperature_ic": bool, "battery_assisted": bool,
               "water_detuned": bool, "ambient_celsius": number}, ...]}
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

EPC_BITS = 96
# reserved, EPC, TID, user
BANK_WORDS = (4, 8, 6, 260)


def epc_hex(epc: int) -> str:
    return f"{epc:024x}"


def parse_epc(text: str) -> int:
    value = int(text, 16)
    if not 0 <= value < 1 << EPC_BITS:
        raise ValueError(f"EPC {text!r} does not fit in {EPC_BITS} bits")
    return value


def _default_banks(epc: int) -> List[List[int]]:
    banks = [[0] * n for n in BANK_WORDS]
    # EPC bank: CRC, PC word (6 EPC words), then the EPC itself
    banks[1][1] = 6 << 11
    for i in range(6):
        banks[1][2 + i] = (epc >> (16 * (5 - i))) & 0xFFFF
    return banks


@dataclass
class TagRecord:
    epc: int
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    has_temperature_ic: bool = False
    battery_assisted: bool = False
    water_detuned: bool = False
    ambient_celsius: float = 20.0
    memory_banks: List[List[int]] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.epc < 1 << EPC_BITS:
            raise ValueError("EPC must be a 96-bit unsigned integer")
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not self.memory_banks:
            self.memory_banks = _default_banks(self.epc)
        if len(self.memory_banks) != 4:
            raise ValueError("a tag has exactly four memory banks")
        if len(self.memory_banks[3]) < 257:
            raise ValueError("user memory must hold at least 257 words")

    def to_dict(self) -> dict:
        return {"epc": epc_hex(self.epc), "position": self.position.tolist(),
                "has_temperature_ic": self.has_temperature_ic, "battery_assisted": self.battery_assisted,
                "water_detuned": self.water_detuned, "ambient_celsius": self.ambient_celsius}

    @classmethod
    def from_dict(cls, d: dict) -> "TagRecord":
        return cls(parse_epc(d["epc"]), d.get("position", (0.0, 0.0, 0.0)),
                   bool(d.get("has_temperature_ic", False)), bool(d.get("battery_assisted", False)),
                   bool(d.get("water_detuned", False)), float(d.get("ambient_celsius", 20.0)))


class TagPopulation:
    """EPC-keyed tag set; callers serialise access through ``lock``."""

    def __init__(self, tags: Iterable[TagRecord] = ()):
        self.lock = threading.RLock()
        self._tags: Dict[int, TagRecord] = {}
        for t in tags:
            self.add(t)

    def add(self, tag: TagRecord) -> None:
        if tag.epc in self._tags:
            raise ValueError(f"duplicate EPC {epc_hex(tag.epc)}")
        self._tags[tag.epc] = tag

    def get(self, epc: int) -> Optional[TagRecord]:
        return self._tags.get(epc)

    def __iter__(self):
        # sorted for deterministic inventory order
        return iter([self._tags[k] for k in sorted(self._tags)])

    def __len__(self):
        return len(self._tags)

    def to_json(self) -> str:
        return json.dumps({"tags": [t.to_dict() for t in self]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TagPopulation":
        return cls(TagRecord.from_dict(d) for d in json.loads(text)["tags"])

    @classmethod
    def load(cls, path) -> "TagPopulation":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

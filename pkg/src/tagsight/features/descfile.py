"""``.desc`` descriptor cache files.

Layout (little-endian): magic ``XVDS``, version u32, count u32, dim u32,
then ``count * dim`` float32 values in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import DescriptorFileError

MAGIC = b"XVDS"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def pack_descriptors(desc: np.ndarray) -> bytes:
    desc = np.asarray(desc, dtype="<f4")
    if desc.ndim != 2:
        raise ValueError("descriptors must be a 2-D array")
    count, dim = desc.shape
    return _HEADER.pack(MAGIC, VERSION, count, dim) + desc.tobytes()


def unpack_descriptors(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise DescriptorFileError("descriptor file shorter than its header")
    magic, version, count, dim = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DescriptorFileError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DescriptorFileError(f"unsupported descriptor file version {version}")
    need = _HEADER.size + 4 * count * dim
    if len(buf) != need:
        raise DescriptorFileError(f"expected {need} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(count, dim).astype(np.float64)


def write_desc(path, desc: np.ndarray) -> None:
    Path(path).write_bytes(pack_descriptors(desc))


def read_desc(path) -> np.ndarray:
    return unpack_descriptors(Path(path).read_bytes())

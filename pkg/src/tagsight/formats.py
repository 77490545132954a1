"""On-disk formats: ASCII PLY point clouds and PGM images with JSON sidecars."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .geometry import CameraIntrinsics, DepthImage, GrayImage, PointCloud

DEFAULT_DEPTH_SCALE = 1e-4  # meters per unit; 16-bit covers 0..6.5535 m


def write_ply(path, cloud: PointCloud) -> None:
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property float x", "property float y", "property float z"]
    if cloud.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    body = []
    for i, p in enumerate(cloud.points):
        row = f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
        if cloud.colors is not None:
            c = cloud.colors[i]
            row += f" {c[0]} {c[1]} {c[2]}"
        body.append(row)
    Path(path).write_text("\n".join(lines + body) + "\n")


def read_ply(path) -> PointCloud:
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n = None
        props = []
        while True:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: missing end_header")
            tok = line.split()
            if not tok or tok[0] == "comment":
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise ValueError(f"{path}: only ASCII PLY is supported")
            if tok[0] == "element" and tok[1] == "vertex":
                n = int(tok[2])
            elif tok[0] == "property":
                props.append(tok[-1])
            elif tok[0] == "end_header":
                break
        if n is None:
            raise ValueError(f"{path}: no vertex element")
        data = np.loadtxt(f, ndmin=2, max_rows=n) if n else np.zeros((0, len(props)))
    if data.shape != (n, len(props)):
        raise ValueError(f"{path}: expected {n} vertices with {len(props)} properties")
    col = {name: i for i, name in enumerate(props)}
    pts = data[:, [col["x"], col["y"], col["z"]]]
    colors = None
    if all(c in col for c in ("red", "green", "blue")):
        colors = data[:, [col["red"], col["green"], col["blue"]]].astype(np.uint8)
    return PointCloud(pts, colors)


def write_pgm(path, values: np.ndarray, maxval: int = 255, binary: bool = True) -> None:
    values = np.asarray(values)
    h, w = values.shape
    if values.min(initial=0) < 0 or values.max(initial=0) > maxval:
        raise ValueError("pixel values out of range for maxval")
    header = f"{'P5' if binary else 'P2'}\n{w} {h}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        if binary:
            dtype = ">u1" if maxval < 256 else ">u2"
            f.write(values.astype(dtype).tobytes())
        else:
            f.write("\n".join(" ".join(str(int(x)) for x in row) for row in values).encode("ascii"))
            f.write(b"\n")


def read_pgm(path) -> Tuple[np.ndarray, int]:
    """Return (integer pixel array, maxval)."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    # magic, width, height, maxval; '#' starts a comment
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        pos += 1  # single whitespace after maxval
        dtype = ">u1" if maxval < 256 else ">u2"
        count = w * h
        buf = raw[pos:pos + count * np.dtype(dtype).itemsize]
        if len(buf) < count * np.dtype(dtype).itemsize:
            raise ValueError(f"{path}: truncated PGM data")
        arr = np.frombuffer(buf, dtype=dtype).reshape(h, w)
    elif magic == "P2":
        arr = np.array(raw[pos:].split(), dtype=np.int64)
        if arr.size < w * h:
            raise ValueError(f"{path}: truncated PGM data")
        arr = arr[: w * h].reshape(h, w)
    else:
        raise ValueError(f"{path}: unsupported PGM magic {magic!r}")
    return arr.astype(np.int64), maxval


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_gray(path, img: GrayImage, k: Optional[CameraIntrinsics] = None, maxval: int = 65535) -> None:
    write_pgm(path, np.round(img.data * maxval).astype(np.int64), maxval=maxval)
    meta = {"kind": "gray"}
    if k is not None:
        meta["intrinsics"] = k.to_dict()
    sidecar_path(path).write_text(json.dumps(meta, indent=2))


def read_gray(path) -> GrayImage:
    arr, maxval = read_pgm(path)
    return GrayImage(arr / float(maxval))


def write_depth(path, depth: DepthImage, k: CameraIntrinsics, depth_scale: float = DEFAULT_DEPTH_SCALE) -> None:
    units = np.round(depth.data / depth_scale).astype(np.int64)
    write_pgm(path, np.clip(units, 0, 65535), maxval=65535)
    meta = {"kind": "depth", "depth_scale": depth_scale, "intrinsics": k.to_dict()}
    sidecar_path(path).write_text(json.dumps(meta, indent=2))


def read_depth(path) -> Tuple[DepthImage, CameraIntrinsics]:
    arr, _ = read_pgm(path)
    meta = json.loads(sidecar_path(path).read_text())
    return DepthImage(arr * float(meta["depth_scale"])), CameraIntrinsics.from_dict(meta["intrinsics"])

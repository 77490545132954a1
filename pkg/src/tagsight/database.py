"""Template database on disk.

Layout::

    <root>/database.json          ordered object list
    <root>/<object_id>/manifest.json
    <root>/<object_id>/view_NNN.pgm (+ .json sidecar)   template image
    <root>/<object_id>/view_NNN.kp.json                 keypoints [u, v, scale, response]
    <root>/<object_id>/view_NNN.desc                    descriptors (float32, XVDS header)
    <root>/<object_id>/cloud_NNN.ply                    viewpoint cloud, capture camera frame
    <root>/<object_id>/model.ply                        dense textured model (optional)

Manifest poses are 4x4 row-major lists mapping object coordinates into the
viewpoint cloud's frame. Camera frames are right-handed, +x right, +y down,
+z forward, in meters.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .errors import EmptyDatabase
from .features.descfile import read_desc, write_desc
from .features.matching import TemplateImage, TemplateObject
from .features.surf import Keypoint
from .formats import read_gray, read_ply, write_gray, write_ply
from .geometry import RigidTransform
from .rfid.tags import epc_hex, parse_epc

SCHEMA_VERSION = 1
FRAME_CONVENTION = "right-handed camera frame: +x right, +y down, +z forward; meters"


def _rig_to_json(rig: dict) -> dict:
    out = {}
    for kind, value in rig.items():
        if isinstance(value, dict):
            out[kind] = {name: epc_hex(e) for name, e in value.items()}
        else:
            out[kind] = epc_hex(value)
    return out


def _rig_from_json(rig: dict) -> dict:
    out = {}
    for kind, value in rig.items():
        if isinstance(value, dict):
            out[kind] = {name: parse_epc(e) for name, e in value.items()}
        else:
            out[kind] = parse_epc(value)
    return out


def save_object(obj: TemplateObject, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    views = []
    for i, ti in enumerate(obj.template_images):
        stem = f"view_{i:03d}"
        write_gray(d / f"{stem}.pgm", ti.image)
        kp = [[k.u, k.v, k.scale, k.response] for k in ti.keypoints]
        (d / f"{stem}.kp.json").write_text(json.dumps(kp))
        write_desc(d / f"{stem}.desc", ti.descriptors)
        views.append({"image": f"{stem}.pgm", "keypoints": f"{stem}.kp.json", "descriptors": f"{stem}.desc"})
    clouds = []
    for i, (cloud, pose) in enumerate(zip(obj.viewpoint_clouds, obj.viewpoint_poses)):
        name = f"cloud_{i:03d}.ply"
        write_ply(d / name, cloud)
        clouds.append({"cloud": name, "pose": pose.as_matrix().reshape(-1).tolist()})
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "object_id": obj.object_id,
        "frame": FRAME_CONVENTION,
        "epc_bindings": [epc_hex(e) for e in obj.epc_bindings],
        "rig": _rig_to_json(obj.rig),
        "symmetry_axis": list(obj.symmetry_axis) if obj.symmetry_axis is not None else None,
        "model_ref": obj.model_ref,
        "template_images": views,
        "viewpoints": clouds,
        "model_cloud": None,
    }
    if obj.model_cloud is not None:
        write_ply(d / "model.ply", obj.model_cloud)
        manifest["model_cloud"] = "model.ply"
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return d


def load_object(directory) -> TemplateObject:
    d = Path(directory)
    m = json.loads((d / "manifest.json").read_text())
    if m.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{d}: unsupported manifest schema {m.get('schema_version')!r}")
    images = []
    for v in m["template_images"]:
        kps = [Keypoint(*map(float, row)) for row in json.loads((d / v["keypoints"]).read_text())]
        desc = read_desc(d / v["descriptors"]).astype(np.float64)
        if len(desc) != len(kps):
            raise ValueError(f"{d / v['descriptors']}: {len(desc)} descriptors for {len(kps)} keypoints")
        images.append(TemplateImage(read_gray(d / v["image"]), kps, desc))
    clouds = [read_ply(d / v["cloud"]) for v in m["viewpoints"]]
    poses = [RigidTransform.from_matrix(np.array(v["pose"]).reshape(4, 4)) for v in m["viewpoints"]]
    model = read_ply(d / m["model_cloud"]) if m.get("model_cloud") else None
    axis = tuple(m["symmetry_axis"]) if m.get("symmetry_axis") is not None else None
    return TemplateObject(m["object_id"], images, clouds, [parse_epc(e) for e in m["epc_bindings"]], poses,
                          model, axis, _rig_from_json(m.get("rig", {})), m.get("model_ref", ""))


def save_database(db: Sequence[TemplateObject], root) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = [o.object_id for o in db]
    if len(set(ids)) != len(ids):
        raise ValueError("object ids must be unique")
    for obj in db:
        save_object(obj, root / obj.object_id)
    (root / "database.json").write_text(json.dumps({"schema_version": SCHEMA_VERSION, "objects": ids}, indent=2))
    return root


def load_database(root) -> List[TemplateObject]:
    root = Path(root)
    index = root / "database.json"
    if index.exists():
        ids = json.loads(index.read_text())["objects"]
    else:
        ids = sorted(p.name for p in root.iterdir() if (p / "manifest.json").exists()) if root.is_dir() else []
    if not ids:
        raise EmptyDatabase(f"{root}: no template objects")
    return [load_object(root / i) for i in ids]

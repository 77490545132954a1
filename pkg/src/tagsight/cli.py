"""Command line entry point: ``tagsight <command>``."""
from __future__ import annotations

import json
import random
import sys
import time
from pathlib import Path

import click
import numpy as np

from .database import load_database, save_database
from .formats import read_depth, read_gray, read_ply, write_depth, write_gray
from .geometry import depth_to_cloud, random_subsample
from .harness.bench import ALL_METHODS, bench_pose, run_benchmark
from .harness.builtin import VIEW_STEP_DEG, builtin_database, builtin_tag_population
from .harness.objects import BUILTIN_OBJECTS
from .harness.render import SCENE_POINTS, generate_scene
from .harness.sweep import RenderedVisionModel, working_range_sweep
from .registration.pose import Method, PoseConfig, estimate_pose
from .rfid.channel import ChannelParams
from .rfid.reader import ReaderService, ReaderSession, SimulatedReader
from .rfid.sensors import WaterLevel
from .rfid.tags import TagPopulation


def _matrix(t) -> list:
    return t.as_matrix().reshape(-1).tolist()


def _split(text: str) -> list:
    return [s.strip() for s in text.split(",") if s.strip()]


def _pose_config(min_matches: int, ratio: float, seed: int = 0) -> PoseConfig:
    return PoseConfig(min_matches=min_matches, ratio=ratio, seed=seed)


@click.group()
def main():
    """Object identification, pose estimation, tag sensing and fusion."""


@main.command("build-db")
@click.option("--out", "out", required=True, type=click.Path(file_okay=False), help="Database directory.")
@click.option("--step", default=VIEW_STEP_DEG, show_default=True, help="Viewpoint spacing in degrees.")
@click.option("--objects", default=",".join(s.object_id for s in BUILTIN_OBJECTS), show_default=True)
def build_db(out, step, objects):
    """Capture the built-in objects into a template database."""
    wanted = _split(objects)
    specs = [s for s in BUILTIN_OBJECTS if s.object_id in wanted]
    unknown = set(wanted) - {s.object_id for s in specs}
    if unknown:
        raise click.BadParameter(f"unknown built-in objects: {', '.join(sorted(unknown))}")
    db = builtin_database(step, objects=specs)
    save_database(db, out)
    click.echo(f"wrote {len(db)} objects x {len(db[0].viewpoint_clouds)} viewpoints to {out}")


@main.command("render-scene")
@click.option("--db", "db_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--object", "object_id", required=True)
@click.option("--yaw", default=0.0, show_default=True, help="Degrees about the object's vertical axis.")
@click.option("--distance", default=0.4, show_default=True, help="Meters along the optical axis.")
@click.option("--noise", default=0.0, show_default=True, help="Depth noise sigma in meters.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "prefix", required=True, help="Output prefix; writes PREFIX_gray.pgm and PREFIX_depth.pgm.")
def render_scene(db_path, object_id, yaw, distance, noise, seed, prefix):
    """Render a synthetic gray + depth capture of one database object."""
    db = load_database(db_path)
    truth = bench_pose(yaw, distance)
    scene = generate_scene(db, object_id, truth, noise, seed)
    write_gray(f"{prefix}_gray.pgm", scene.gray, scene.intrinsics)
    write_depth(f"{prefix}_depth.pgm", scene.depth, scene.intrinsics)
    click.echo(json.dumps({"object_id": object_id, "ground_truth": _matrix(truth)}))


@main.command("estimate-pose")
@click.option("--db", "db_path", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--image", "--gray", "gray_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Gray PGM of the scene.")
@click.option("--depth", "depth_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Depth PGM with its JSON sidecar (scale and intrinsics).")
@click.option("--scene", "scene_path", type=click.Path(exists=True, dir_okay=False),
              help="Scene cloud PLY; back-projected from the depth image when omitted.")
@click.option("--method", type=click.Choice([m.value for m in Method]), default="lf-icp", show_default=True)
@click.option("--min-matches", default=12, show_default=True)
@click.option("--ratio", default=0.7, show_default=True)
@click.option("--seed", default=0, show_default=True, help="SAC-IA seed.")
def estimate_pose_cmd(db_path, gray_path, depth_path, scene_path, method, min_matches, ratio, seed):
    """Identify the object in a capture and print its pose as JSON."""
    db = load_database(db_path)
    gray = read_gray(gray_path)
    depth, k = read_depth(depth_path)
    if scene_path:
        cloud = read_ply(scene_path)
    else:
        cloud = random_subsample(depth_to_cloud(depth, k), SCENE_POINTS)
    res = estimate_pose(method, gray, depth, k, cloud, db, _pose_config(min_matches, ratio, seed))
    if res is None:
        click.echo(json.dumps({"object_id": None}))
        sys.exit(1)
    est = res.estimate
    click.echo(json.dumps({
        "object_id": res.object_id, "object_pose": _matrix(res.object_pose), "m_pose": _matrix(est.m_pose),
        "m_ini": _matrix(est.m_ini), "m_icp": _matrix(est.m_icp), "residual_m": est.residual,
        "viewpoint_index": est.viewpoint_index, "timings_s": res.timings,
    }, indent=2))


def _parse_range(text: str):
    lo, sep, hi = text.partition(":")
    if not sep:
        raise click.BadParameter("range must look like LO:HI")
    return float(lo), float(hi)


@main.command()
@click.option("--db", "db_path", type=click.Path(exists=True, file_okay=False),
              help="Template database; the built-in objects are generated when omitted.")
@click.option("--views", default=5, show_default=True)
@click.option("--range", "drange", default="0.3:0.5", show_default=True, help="Distance range LO:HI in meters.")
@click.option("--methods", default=",".join(m.value for m in ALL_METHODS), show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--noise", default=0.0, show_default=True, help="Depth noise sigma in meters.")
@click.option("--out", "out", type=click.Path(dir_okay=False), help="Write the JSON report here.")
@click.option("--no-timings", is_flag=True, help="Omit wall times so reports compare byte for byte.")
def bench(db_path, views, drange, methods, seed, noise, out, no_timings):
    """Run the recognition / pose / runtime benchmark."""
    db = load_database(db_path) if db_path else builtin_database()
    report = run_benchmark(db, views, _parse_range(drange), _split(methods), seed, noise)
    text = report.to_json(timings=not no_timings)
    if out:
        Path(out).write_text(text)
    for m, s in report.summary().items():
        res = "n/a" if s.mean_residual_m is None else f"{s.mean_residual_m * 1000:.2f} mm"
        click.echo(f"{m:8s} accuracy {s.correct}/{s.total}  mean residual {res}  mean time {s.mean_time_s:.3f} s")


@main.command("range-sweep")
@click.option("--db", "db_path", type=click.Path(exists=True, file_okay=False))
@click.option("--object", "object_id", default="mug", show_default=True)
@click.option("--d-min", default=0.2, show_default=True)
@click.option("--d-max", default=2.0, show_default=True)
@click.option("--steps", default=19, show_default=True)
@click.option("--out", "out", default="sweep.csv", show_default=True, type=click.Path(dir_okay=False))
def range_sweep(db_path, object_id, d_min, d_max, steps, out):
    """Score tag signal and identification quality against distance; writes CSV."""
    db = load_database(db_path) if db_path else builtin_database()
    res = working_range_sweep(ChannelParams(), RenderedVisionModel(db, object_id), d_min, d_max, steps)
    Path(out).write_text(res.to_csv())
    click.echo(f"rfid safe ranges:   {res.rfid_safe}")
    click.echo(f"vision safe ranges: {res.vision_safe}  (peak at {res.vision_peak():.2f} m)")


@main.command("make-tags")
@click.option("--out", "out", required=True, type=click.Path(dir_okay=False))
@click.option("--water", type=click.Choice(["empty", "middle", "full"]), default="middle", show_default=True)
@click.option("--ambient", default=22.5, show_default=True, help="Temperature seen by the sensor tag.")
def make_tags(out, water, ambient):
    """Write the built-in objects' tag population as JSON."""
    builtin_tag_population(WaterLevel(water), ambient).save(out)
    click.echo(f"wrote {out}")


@main.command("reader-serve")
@click.option("--tags", "tags_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=5084, show_default=True)
def reader_serve(tags_path, host, port):
    """Serve a simulated reader over TCP until interrupted."""
    reader = SimulatedReader(TagPopulation.load(tags_path))
    with ReaderService(reader, (host, port)) as srv:
        click.echo(f"reader listening on {srv.endpoint[0]}:{srv.endpoint[1]}")
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass


@main.command()
@click.option("--db", "db_path", type=click.Path(exists=True, file_okay=False))
@click.option("--tags", "tags_path", type=click.Path(exists=True, dir_okay=False),
              help="Tag population for an in-process reader (ignored when the config names a reader endpoint).")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Server config JSON.")
@click.option("--object", "object_id", default="mug", show_default=True, help="Object shown to the camera.")
@click.option("--frames", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out", type=click.Path(dir_okay=False), help="NDJSON output (stdout when omitted).")
@click.option("--serve-seconds", default=0.0, show_default=True,
              help="Keep serving the final state on the config's listen endpoint this long.")
def fuse(db_path, tags_path, config_path, object_id, frames, seed, out, serve_seconds):
    """Run synthetic captures and reader polls through the fusion registry."""
    from .fusion.registry import Registry
    from .fusion.server import AnnotationServer, ServerConfig, frames_from_scenes, parse_endpoint, run_fusion

    cfg = ServerConfig.load(config_path) if config_path else ServerConfig()
    db_path = db_path or cfg.registry_path
    db = load_database(db_path) if db_path else builtin_database()
    registry = Registry.from_database(db)
    if cfg.reader_endpoint:
        session = ReaderSession.connect(*parse_endpoint(cfg.reader_endpoint))
    elif tags_path:
        session = ReaderSession.in_process(SimulatedReader(TagPopulation.load(tags_path)))
    else:
        session = ReaderSession.in_process(SimulatedReader(builtin_tag_population()))
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(frames):
        truth = bench_pose(float(rng.uniform(-30, 30)), float(rng.uniform(0.35, 0.45)))
        scenes.append(generate_scene(db, object_id, truth, 0.0, seed + i))
    stream = open(out, "w") if out else sys.stdout
    try:
        run_fusion(frames_from_scenes(scenes, time.time_ns() // 1000), db, registry, session, cfg,
                   out=stream, rng=random.Random(seed))
    finally:
        session.close()
        if out:
            stream.close()
    if serve_seconds > 0 and cfg.listen_endpoint:
        with AnnotationServer(registry, cfg, parse_endpoint(cfg.listen_endpoint)) as srv:
            srv.start()
            click.echo(f"serving annotations on {cfg.listen_endpoint} for {serve_seconds:g} s", err=True)
            time.sleep(serve_seconds)
            srv.shutdown()
    if registry.diagnostics:
        click.echo(f"diagnostics: {dict(registry.diagnostics)}", err=True)


if __name__ == "__main__":
    main()

"""Command-line interface.

Subcommands::

    plan         plan grasps for one object file
    batch        plan grasps for every object in a directory
    refine       resume optimization from coarse poses in a JSONL file
    masked       plan with anchors restricted to labeled points
    noise-sweep  valid proportion vs. synthetic position noise (CSV)
    weightmap    build/refresh the gripper weight cache, dump a colored PLY

Exit codes: 0 success, 2 configuration error, 3 input error, 4 planning
finished but produced no valid grasp.

Grasp records are JSON Lines: a header object (``"schema": 1``, quaternion
order declaration), one record per initial pose, and a summary object.
Floats round-trip exactly through the shortest-repr encoding.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, GraspfitError
from .gripper import Gripper, build_gripper, cache_path_for
from .objective import PoseState
from .planner import (
    GraspResult,
    optimize_batch,
    plan,
    plan_masked,
    refine_poses,
    select_best,
    valid_results,
)
from .pointcloud import PointCloud, add_gaussian_noise, load_point_cloud, write_ply_points

log = logging.getLogger("graspfit.cli")

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NO_VALID = 4

_CLOUD_PATTERNS = ("*.ply", "*.obj", "*.xyz", "*.xyzn", "*.txt")


# --- records ------------------------------------------------------------------------


def result_to_record(result: GraspResult) -> dict:
    """JSON-ready dictionary for one grasp result."""
    b = result.breakdown
    return {
        "rotation": [float(v) for v in result.pose.rotation],
        "translation": [float(v) for v in result.pose.translation],
        "joints": [float(v) for v in result.pose.joints],
        "energy": {
            "point": b.e_point,
            "normal": b.e_normal,
            "force_closure": b.e_force_closure,
            "barrier": b.e_barrier,
            "joint_barrier": b.e_joint_barrier,
            "total": b.e_total,
        },
        "converged": result.converged,
        "collision_free": result.collision_free,
        "self_collision_free": result.self_collision_free,
        "within_limits": result.within_limits,
        "valid": result.valid,
        "sample_index": int(result.sample_index),
        "iterations": [int(result.iterations_outer), int(result.iterations_inner)],
        "wall_time_ms": float(result.wall_time_ms),
    }


def pose_from_record(record: dict, row: int) -> PoseState:
    for key in ("rotation", "translation", "joints"):
        if key not in record:
            raise GraspfitError(f"record {row}: missing field {key!r}")
    rotation = np.asarray(record["rotation"], dtype=float)
    translation = np.asarray(record["translation"], dtype=float)
    joints = np.asarray(record["joints"], dtype=float)
    if rotation.shape != (4,) or translation.shape != (3,):
        raise GraspfitError(f"record {row}: bad pose shape")
    if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))
            and np.all(np.isfinite(joints))):
        raise GraspfitError(f"record {row}: non-finite pose value")
    return PoseState(rotation, translation, joints)


def write_records(path: str, results: list[GraspResult], header: dict) -> dict:
    """Write header, one record per result, and a summary line; returns summary."""
    valid = valid_results(results)
    best = select_best(results)
    summary = {
        "summary": True,
        "count": len(results),
        "valid_count": len(valid),
        "valid_proportion": (len(valid) / len(results)) if results else 0.0,
        "mean_time_per_valid_ms": (
            sum(r.wall_time_ms for r in results) / len(valid)) if valid else None,
        "best": result_to_record(best) if best is not None else None,
    }
    head = {"schema": SCHEMA_VERSION, "kind": "grasp_records",
            "quaternion_order": "wxyz", "tool_version": __version__}
    head.update(header)
    with open(path, "w") as fh:
        fh.write(json.dumps(head) + "\n")
        for result in results:
            fh.write(json.dumps(result_to_record(result)) + "\n")
        fh.write(json.dumps(summary) + "\n")
    return summary


def read_records(path: str) -> tuple[dict, list[dict], dict | None]:
    """Read a JSONL grasp file back into (header, records, summary)."""
    if not os.path.isfile(path):
        raise GraspfitError(f"no such file: {path}")
    header: dict | None = None
    records: list[dict] = []
    summary: dict | None = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise GraspfitError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            if header is None:
                header = obj
                if obj.get("schema") != SCHEMA_VERSION:
                    raise GraspfitError(
                        f"{path}: unsupported schema {obj.get('schema')!r}")
            elif obj.get("summary"):
                summary = obj
            else:
                records.append(obj)
    if header is None:
        raise GraspfitError(f"{path}: empty records file")
    return header, records, summary


# --- shared helpers ---------------------------------------------------------------------


def _build_gripper(cfg: RunConfig, use_cache: bool = True) -> Gripper:
    g = cfg.gripper
    gripper, from_cache = build_gripper(
        g.urdf,
        density=g.sample_density,
        seed=cfg.seed,
        ray_count=g.ray_count,
        fingertip_links=g.fingertip_links,
        fingertip_boost=g.fingertip_boost,
        q_open=None if g.q_open is None else np.asarray(g.q_open, dtype=float),
        obb_padding=g.obb_padding,
        mesh_root=g.mesh_root,
        light_override=None if g.light_override is None
        else np.asarray(g.light_override, dtype=float),
        r_hit_factor=g.r_hit_factor,
        use_cache=use_cache,
    )
    log.info("gripper ready: %d samples, %d weighted, cache %s",
             len(gripper.surfaces), len(gripper.act_points),
             "hit" if from_cache else "miss")
    return gripper


def _load_cloud(path: str, estimate_k: int | None = 16) -> PointCloud:
    return load_point_cloud(path, estimate_k=estimate_k)


def _planner_config(cfg: RunConfig):
    from dataclasses import replace
    return replace(cfg.planner, seed=cfg.seed)


def _out_path(args, cfg: RunConfig, default: str) -> str:
    if getattr(args, "out", None):
        return args.out
    if cfg.output:
        return cfg.output
    return default


# --- subcommands -------------------------------------------------------------------------


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    if args.jobs is not None:
        cfg.jobs = args.jobs
    gripper = _build_gripper(cfg, use_cache=not args.no_cache)
    cloud = _load_cloud(args.object)
    results = plan(cloud, gripper, cfg.barrier, _planner_config(cfg),
                   cfg.samples, jobs=cfg.jobs)
    out = _out_path(args, cfg, "grasps.jsonl")
    summary = write_records(out, results, {
        "object": os.path.abspath(args.object), "seed": cfg.seed,
        "gripper_dof": gripper.model.dof,
    })
    log.info("plan: %d/%d valid -> %s", summary["valid_count"],
             summary["count"], out)
    print(f"{summary['valid_count']}/{summary['count']} valid grasps "
          f"-> {out}")
    return EXIT_OK if summary["valid_count"] > 0 else EXIT_NO_VALID


def cmd_batch(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if not os.path.isdir(args.objects):
        log.error("not a directory: %s", args.objects)
        return EXIT_INPUT
    paths = sorted(p for pat in _CLOUD_PATTERNS
                   for p in glob.glob(os.path.join(args.objects, pat)))
    if not paths:
        log.error("no cloud files in %s", args.objects)
        return EXIT_INPUT
    gripper = _build_gripper(cfg, use_cache=not args.no_cache)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = {"schema": SCHEMA_VERSION, "objects": [], "skipped": []}
    total_valid = total_all = 0
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        try:
            cloud = _load_cloud(path)
        except GraspfitError as exc:
            log.warning("skipping %s: %s", path, exc)
            manifest["skipped"].append({"object": path, "reason": str(exc)})
            continue
        results = plan(cloud, gripper, cfg.barrier, _planner_config(cfg),
                       cfg.samples, jobs=cfg.jobs)
        out = os.path.join(args.out_dir, name + ".jsonl")
        summary = write_records(out, results, {
            "object": os.path.abspath(path), "seed": cfg.seed,
            "gripper_dof": gripper.model.dof,
        })
        manifest["objects"].append({
            "object": path, "records": out,
            "valid_proportion": summary["valid_proportion"],
            "count": summary["count"],
        })
        total_valid += summary["valid_count"]
        total_all += summary["count"]
    if not manifest["objects"]:
        return EXIT_INPUT
    manifest["valid_proportion"] = total_valid / total_all if total_all else 0.0
    manifest_path = os.path.join(args.out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"{len(manifest['objects'])} objects planned, "
          f"{len(manifest['skipped'])} skipped -> {manifest_path}")
    return EXIT_OK if total_valid > 0 else EXIT_NO_VALID


def cmd_refine(args) -> int:
    if args.steps < 0:
        log.error("--steps must be >= 0")
        return EXIT_CONFIG
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    gripper = _build_gripper(cfg, use_cache=not args.no_cache)
    cloud = _load_cloud(args.object)
    try:
        _, records, _ = read_records(args.poses)
        poses = [pose_from_record(r, i) for i, r in enumerate(records)]
    except GraspfitError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    if not poses:
        log.error("no poses in %s", args.poses)
        return EXIT_INPUT
    for pose in poses:
        if len(pose.joints) != gripper.model.dof:
            log.error("pose has %d joints, model wants %d",
                      len(pose.joints), gripper.model.dof)
            return EXIT_INPUT

    ladder = [0, args.steps]
    report = {"schema": SCHEMA_VERSION, "poses": len(poses), "budgets": []}
    refined: list[GraspResult] | None = None
    for budget in ladder:
        t0 = time.perf_counter()
        results = refine_poses(poses, cloud, gripper, cfg.barrier,
                               _planner_config(cfg), budget, jobs=cfg.jobs)
        elapsed = (time.perf_counter() - t0) * 1e3
        energies = sorted(r.breakdown.e_total for r in results)
        mid = len(energies) // 2
        median = energies[mid] if len(energies) % 2 else \
            0.5 * (energies[mid - 1] + energies[mid])
        report["budgets"].append({
            "steps": budget,
            "median_energy": median,
            "mean_energy": sum(energies) / len(energies),
            "valid_count": sum(1 for r in results if r.valid),
            "wall_time_ms": elapsed,
        })
        if budget == args.steps:
            refined = results
    out = _out_path(args, cfg, "refined.jsonl")
    write_records(out, refined, {
        "object": os.path.abspath(args.object), "seed": cfg.seed,
        "gripper_dof": gripper.model.dof, "refine_steps": args.steps,
    })
    report_path = os.path.splitext(out)[0] + ".report.json"
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2)
    before = report["budgets"][0]["median_energy"]
    after = report["budgets"][-1]["median_energy"]
    print(f"median energy {before:.6g} -> {after:.6g} over "
          f"{args.steps} steps -> {out}")
    return EXIT_OK


def cmd_masked(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    if args.jobs is not None:
        cfg.jobs = args.jobs
    gripper = _build_gripper(cfg, use_cache=not args.no_cache)
    cloud = _load_cloud(args.object)
    try:
        labels = np.loadtxt(args.labels, dtype=np.int64, comments="#", ndmin=1)
    except (OSError, ValueError) as exc:
        log.error("cannot read labels %s: %s", args.labels, exc)
        return EXIT_INPUT
    if len(labels) != len(cloud):
        log.error("labels length %d != cloud size %d", len(labels), len(cloud))
        return EXIT_INPUT
    cloud = PointCloud(cloud.positions, cloud.normals, labels=labels)
    mask = [int(v) for v in args.mask.split(",") if v.strip() != ""]
    if not mask:
        log.error("empty mask")
        return EXIT_NO_VALID
    try:
        results = plan_masked(cloud, mask, gripper, cfg.barrier,
                              _planner_config(cfg), cfg.samples, jobs=cfg.jobs)
    except GraspfitError as exc:
        log.error("%s", exc)
        return EXIT_NO_VALID
    out = _out_path(args, cfg, "masked.jsonl")
    summary = write_records(out, results, {
        "object": os.path.abspath(args.object), "seed": cfg.seed,
        "gripper_dof": gripper.model.dof, "mask": mask,
    })
    print(f"{summary['valid_count']}/{summary['count']} valid masked grasps "
          f"-> {out}")
    return EXIT_OK if summary["valid_count"] > 0 else EXIT_NO_VALID


def cmd_noise_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    if args.jobs is not None:
        cfg.jobs = args.jobs
    try:
        sigmas = [float(s) for s in args.sigmas.split(",") if s.strip() != ""]
    except ValueError:
        log.error("bad --sigmas list: %s", args.sigmas)
        return EXIT_CONFIG
    if not sigmas or any(s < 0 for s in sigmas):
        log.error("sigmas must be nonnegative")
        return EXIT_CONFIG
    gripper = _build_gripper(cfg, use_cache=not args.no_cache)
    cloud = _load_cloud(args.object)
    rows = []
    for sigma in sigmas:
        noisy = add_gaussian_noise(cloud, sigma, cfg.seed)
        results = plan(noisy, gripper, cfg.barrier, _planner_config(cfg),
                       cfg.samples, jobs=cfg.jobs)
        valid = valid_results(results)
        mean_ms = (sum(r.wall_time_ms for r in results) / len(valid)) \
            if valid else float("nan")
        rows.append((sigma, len(valid) / len(results), mean_ms))
        log.info("sigma %.4g: %d/%d valid", sigma, len(valid), len(results))
    out = _out_path(args, cfg, "noise_sweep.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "valid_proportion", "mean_time_per_valid_ms"])
        for sigma, prop, ms in rows:
            writer.writerow([repr(sigma), repr(prop), repr(ms)])
    print(f"{len(rows)} noise levels -> {out}")
    return EXIT_OK


def cmd_weightmap(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    gripper = _build_gripper(cfg, use_cache=not args.no_cache)
    out = _out_path(args, cfg, "weightmap.ply")
    s = gripper.surfaces
    top = float(s.weight.max()) if s.weight.max() > 0 else 1.0
    heat = (s.weight / top * 255.0).astype(np.uint8)
    colors = np.column_stack([heat, np.where(s.palmar, 64, 0),
                              np.where(s.weight > 0, 0, 128)]).astype(np.uint8)
    write_ply_points(out, s.points, normals=s.normals, colors=colors)
    print(f"{len(s)} samples ({int(np.count_nonzero(s.weight))} weighted) "
          f"-> {out}; cache at {cache_path_for(cfg.gripper.urdf)}")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------------


def _add_common(sub: argparse.ArgumentParser, with_samples: bool = True) -> None:
    sub.add_argument("--config", required=True, help="run configuration YAML")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    sub.add_argument("--out", default=None, help="output path")
    sub.add_argument("--jobs", type=int, default=None,
                     help="worker processes (default from config)")
    sub.add_argument("--no-cache", action="store_true",
                     help="ignore and do not write the gripper asset cache")
    if with_samples:
        sub.add_argument("--samples", type=int, default=None,
                         help="number of anchor samples (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspfit",
        description="Batch-parallel differentiable grasp planning")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="INFO-level logging to stderr")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("plan", help="plan grasps for one object")
    p.add_argument("object", help="point cloud file (ply/obj/xyzn)")
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = subs.add_parser("batch", help="plan grasps for a directory of objects")
    p.add_argument("objects", help="directory of cloud files")
    p.add_argument("--out-dir", default="batch_out",
                   help="directory for per-object records and manifest")
    _add_common(p)
    p.set_defaults(func=cmd_batch)

    p = subs.add_parser("refine", help="refine coarse poses from a JSONL file")
    p.add_argument("object", help="point cloud file")
    p.add_argument("poses", help="JSONL file with pose records")
    p.add_argument("--steps", type=int, default=10,
                   help="inner gradient step budget")
    _add_common(p, with_samples=False)
    p.set_defaults(func=cmd_refine)

    p = subs.add_parser("masked", help="plan with anchors restricted by labels")
    p.add_argument("object", help="point cloud file")
    p.add_argument("labels", help="text file: one integer label per point")
    p.add_argument("--mask", required=True,
                   help="comma-separated label ids to sample from")
    _add_common(p)
    p.set_defaults(func=cmd_masked)

    p = subs.add_parser("noise-sweep",
                        help="valid proportion vs. Gaussian position noise")
    p.add_argument("object", help="point cloud file")
    p.add_argument("--sigmas", default="0,0.002,0.005,0.01",
                   help="comma-separated noise sigmas in meters")
    _add_common(p)
    p.set_defaults(func=cmd_noise_sweep)

    p = subs.add_parser("weightmap",
                        help="build the gripper weight cache and dump a PLY")
    _add_common(p, with_samples=False)
    p.set_defaults(func=cmd_weightmap)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except GraspfitError as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration: one strict, human-editable YAML file.

Unknown keys anywhere in the document are rejected so typos fail loudly
instead of silently running with defaults.  Paths are resolved relative to
the config file and must exist at load time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .objective import BarrierParams
from .planner import OptimizerSpec, PlannerConfig
from .quality import FrictionModel


@dataclass
class GripperSection:
    urdf: str = ""
    mesh_root: str | None = None
    sample_density: float = 50_000.0
    fingertip_links: list[str] | None = None
    fingertip_boost: float = 2.0
    q_open: list[float] | None = None
    obb_padding: float = 0.0
    ray_count: int = 10_000
    light_override: list[float] | None = None
    r_hit_factor: float = 1.5


@dataclass
class RunConfig:
    """Everything a planning run needs, path-resolved and validated."""

    seed: int = 0
    samples: int = 64
    jobs: int = 1
    gripper: GripperSection = field(default_factory=GripperSection)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    barrier: BarrierParams = field(default_factory=BarrierParams)
    friction: FrictionModel = field(default_factory=FrictionModel)
    output: str | None = None


def _require_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return int(value)


def _as_vec(value, n: int | None, where: str) -> list[float]:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{where} must be a list")
    if n is not None and len(value) != n:
        raise ConfigError(f"{where} must have {n} entries")
    return [_as_float(v, where) for v in value]


def load_config(path: str) -> RunConfig:
    """Parse and validate a YAML run configuration file."""
    if not os.path.isfile(path):
        raise ConfigError(f"no such config file: {path}")
    try:
        with open(path, "r") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse failure: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    base_dir = os.path.dirname(os.path.abspath(path))
    return config_from_mapping(doc, base_dir)


def config_from_mapping(doc: dict, base_dir: str) -> RunConfig:
    _require_keys(doc, {"seed", "samples", "jobs", "gripper", "planner",
                        "barrier", "quality", "output"}, "top level")
    cfg = RunConfig()
    if "seed" in doc:
        cfg.seed = _as_int(doc["seed"], "seed")
    if "samples" in doc:
        cfg.samples = _as_int(doc["samples"], "samples")
        if cfg.samples < 1:
            raise ConfigError("samples must be >= 1")
    if "jobs" in doc:
        cfg.jobs = _as_int(doc["jobs"], "jobs")
        if cfg.jobs < 1:
            raise ConfigError("jobs must be >= 1")
    if "output" in doc:
        if not isinstance(doc["output"], str):
            raise ConfigError("output must be a path string")
        cfg.output = doc["output"]

    g = doc.get("gripper")
    if not isinstance(g, dict) or "urdf" not in g:
        raise ConfigError("config needs a gripper section with a urdf path")
    _require_keys(g, {"urdf", "mesh_root", "sample_density", "fingertip_links",
                      "fingertip_boost", "q_open", "obb_padding", "ray_count",
                      "light_override", "r_hit_factor"}, "gripper")
    gs = GripperSection()
    if not isinstance(g["urdf"], str):
        raise ConfigError("gripper.urdf must be a path string")
    gs.urdf = g["urdf"] if os.path.isabs(g["urdf"]) \
        else os.path.join(base_dir, g["urdf"])
    if not os.path.isfile(gs.urdf):
        raise ConfigError(f"gripper.urdf does not exist: {gs.urdf}")
    if g.get("mesh_root") is not None:
        root = g["mesh_root"]
        if not isinstance(root, str):
            raise ConfigError("gripper.mesh_root must be a path string")
        gs.mesh_root = root if os.path.isabs(root) else os.path.join(base_dir, root)
        if not os.path.isdir(gs.mesh_root):
            raise ConfigError(f"gripper.mesh_root does not exist: {gs.mesh_root}")
    if "sample_density" in g:
        gs.sample_density = _as_float(g["sample_density"], "gripper.sample_density")
        if gs.sample_density <= 0:
            raise ConfigError("gripper.sample_density must be positive")
    if g.get("fingertip_links") is not None:
        links = g["fingertip_links"]
        if (not isinstance(links, list) or not links
                or not all(isinstance(x, str) for x in links)):
            raise ConfigError("gripper.fingertip_links must be a list of names")
        gs.fingertip_links = list(links)
    if "fingertip_boost" in g:
        gs.fingertip_boost = _as_float(g["fingertip_boost"],
                                       "gripper.fingertip_boost")
        if gs.fingertip_boost < 1.0:
            raise ConfigError("gripper.fingertip_boost must be >= 1")
    if g.get("q_open") is not None:
        gs.q_open = _as_vec(g["q_open"], None, "gripper.q_open")
    if "obb_padding" in g:
        gs.obb_padding = _as_float(g["obb_padding"], "gripper.obb_padding")
        if gs.obb_padding < 0:
            raise ConfigError("gripper.obb_padding must be >= 0")
    if "ray_count" in g:
        gs.ray_count = _as_int(g["ray_count"], "gripper.ray_count")
        if gs.ray_count < 1:
            raise ConfigError("gripper.ray_count must be >= 1")
    if g.get("light_override") is not None:
        gs.light_override = _as_vec(g["light_override"], 3,
                                    "gripper.light_override")
    if "r_hit_factor" in g:
        gs.r_hit_factor = _as_float(g["r_hit_factor"], "gripper.r_hit_factor")
        if gs.r_hit_factor <= 0:
            raise ConfigError("gripper.r_hit_factor must be positive")
    cfg.gripper = gs

    p = doc.get("planner", {})
    if not isinstance(p, dict):
        raise ConfigError("planner section must be a mapping")
    _require_keys(p, {"epsilon0", "n_outer", "n_inner", "alpha", "beta",
                      "gamma", "optimizer", "d_gripper", "approach_axis",
                      "keep_trace"}, "planner")
    kwargs: dict = {}
    for key in ("epsilon0", "alpha", "beta", "gamma", "d_gripper"):
        if key in p:
            kwargs[key] = _as_float(p[key], f"planner.{key}")
            if key != "epsilon0" and kwargs[key] <= 0:
                raise ConfigError(f"planner.{key} must be positive")
    for key in ("n_outer", "n_inner"):
        if key in p:
            kwargs[key] = _as_int(p[key], f"planner.{key}")
            if kwargs[key] < 1:
                raise ConfigError(f"planner.{key} must be >= 1")
    if "approach_axis" in p:
        axis = _as_vec(p["approach_axis"], 3, "planner.approach_axis")
        if not np.linalg.norm(axis) > 0:
            raise ConfigError("planner.approach_axis must be nonzero")
        kwargs["approach_axis"] = tuple(axis)
    if "keep_trace" in p:
        if not isinstance(p["keep_trace"], bool):
            raise ConfigError("planner.keep_trace must be a boolean")
        kwargs["keep_trace"] = p["keep_trace"]
    if "optimizer" in p:
        o = p["optimizer"]
        if not isinstance(o, dict) or "kind" not in o:
            raise ConfigError("planner.optimizer needs a kind")
        _require_keys(o, {"kind", "momentum", "beta1", "beta2", "eps"},
                      "planner.optimizer")
        if o["kind"] not in ("plain", "momentum", "adam"):
            raise ConfigError(f"unknown optimizer kind {o['kind']!r}")
        okw = {"kind": o["kind"]}
        for key in ("momentum", "beta1", "beta2", "eps"):
            if key in o:
                okw[key] = _as_float(o[key], f"planner.optimizer.{key}")
        kwargs["optimizer"] = OptimizerSpec(**okw)
    kwargs["seed"] = cfg.seed
    cfg.planner = PlannerConfig(**kwargs)

    b = doc.get("barrier", {})
    if not isinstance(b, dict):
        raise ConfigError("barrier section must be a mapping")
    _require_keys(b, {"d_hat", "joint_margin_scale", "distance_floor",
                      "squared_distance", "contact_count",
                      "contact_pool_fraction"}, "barrier")
    bkw: dict = {}
    for key in ("d_hat", "joint_margin_scale", "distance_floor",
                "contact_pool_fraction"):
        if key in b:
            bkw[key] = _as_float(b[key], f"barrier.{key}")
            if bkw[key] <= 0:
                raise ConfigError(f"barrier.{key} must be positive")
    if "squared_distance" in b:
        if not isinstance(b["squared_distance"], bool):
            raise ConfigError("barrier.squared_distance must be a boolean")
        bkw["squared_distance"] = b["squared_distance"]
    if "contact_count" in b:
        bkw["contact_count"] = _as_int(b["contact_count"], "barrier.contact_count")
        if bkw["contact_count"] < 1:
            raise ConfigError("barrier.contact_count must be >= 1")
    cfg.barrier = BarrierParams(**bkw)

    qsec = doc.get("quality", {})
    if not isinstance(qsec, dict):
        raise ConfigError("quality section must be a mapping")
    _require_keys(qsec, {"mu", "cone_edges"}, "quality")
    fkw: dict = {}
    if "mu" in qsec:
        fkw["mu"] = _as_float(qsec["mu"], "quality.mu")
    if "cone_edges" in qsec:
        fkw["cone_edges"] = _as_int(qsec["cone_edges"], "quality.cone_edges")
    try:
        cfg.friction = FrictionModel(**fkw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    return cfg

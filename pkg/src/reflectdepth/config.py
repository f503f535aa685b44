"""TOML configuration: one section per module ([loss], [solver], [scene])."""
from __future__ import annotations

import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .losses import METRICS, LossConfig, WindowKernel
from .solver import SolverConfig
from .synth import Billboard, SceneSpec, default_scene_spec, look_camera

SOLVER_KEYS = {f.name for f in fields(SolverConfig)} - {"init_pose"}
PRIOR_KEYS = {"prior_height": 0.5, "prior_pitch_deg": 0.0}


class ConfigError(ValueError):
    pass


def load_config(path=None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e


def save_config(cfg: dict, path) -> None:
    Path(path).write_bytes(tomli_w.dumps(cfg).encode())


def _check_keys(section: dict, allowed, name: str):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")


def loss_from_dict(d: dict) -> tuple[LossConfig, str]:
    """``(LossConfig, metric)`` from a [loss] table."""
    allowed = {"alpha", "epsilon", "kernel_size", "kernel_gaussian", "smoothness_weight",
               "passim_variant", "metric"}
    _check_keys(d, allowed, "loss")
    base = LossConfig()
    kernel = WindowKernel(int(d.get("kernel_size", base.kernel.size)),
                          bool(d.get("kernel_gaussian", base.kernel.gaussian)))
    metric = d.get("metric", "passim")
    if metric not in METRICS:
        raise ConfigError(f"metric must be one of {METRICS}")
    cfg = LossConfig(alpha=float(d.get("alpha", base.alpha)),
                     epsilon=float(d.get("epsilon", base.epsilon)),
                     kernel=kernel,
                     smoothness_weight=float(d.get("smoothness_weight", base.smoothness_weight)),
                     passim_variant=d.get("passim_variant", base.passim_variant))
    return cfg, metric


def loss_to_dict(cfg: LossConfig, metric: str = "passim") -> dict:
    return {"alpha": cfg.alpha, "epsilon": cfg.epsilon, "kernel_size": cfg.kernel.size,
            "kernel_gaussian": cfg.kernel.gaussian, "smoothness_weight": cfg.smoothness_weight,
            "passim_variant": cfg.passim_variant, "metric": metric}


def solver_from_dict(d: dict) -> tuple[SolverConfig, dict]:
    """``(SolverConfig, prior)``; the prior holds the plane-guess height and pitch."""
    _check_keys(d, SOLVER_KEYS | set(PRIOR_KEYS), "solver")
    kw = {k: v for k, v in d.items() if k in SOLVER_KEYS}
    prior = {k: float(d.get(k, v)) for k, v in PRIOR_KEYS.items()}
    ints = {"max_iters", "pyramid_levels", "stop_window", "max_halvings"}
    kw = {k: (int(v) if k in ints else float(v)) for k, v in kw.items()}
    return SolverConfig(**kw), prior


def solver_to_dict(cfg: SolverConfig, prior: dict | None = None) -> dict:
    out = {k: v for k, v in asdict(cfg).items() if k in SOLVER_KEYS}
    out.update(prior or PRIOR_KEYS)
    return out


def scene_from_dict(d: dict) -> SceneSpec:
    allowed = {"seed", "size", "focal", "camera_height", "pitch_deg", "yaw_deg", "roll_deg",
               "attenuation", "ripple_max_drift", "supersample", "billboards"}
    _check_keys(d, allowed, "scene")
    seed = int(d.get("seed", 0))
    size = int(d.get("size", 64))
    spec = default_scene_spec(seed, float(d.get("attenuation", 1.0)),
                              float(d.get("ripple_max_drift", 0.0)), size)
    over = {}
    if "focal" in d:
        over["focal"] = float(d["focal"])
    if "supersample" in d:
        over["supersample"] = int(d["supersample"])
    if {"camera_height", "pitch_deg", "yaw_deg", "roll_deg"} & set(d):
        over["camera"] = look_camera(float(d.get("camera_height", 0.5)), float(d.get("pitch_deg", 6.0)),
                                     float(d.get("yaw_deg", 0.0)), float(d.get("roll_deg", 0.0)))
    if "billboards" in d:
        boards = []
        for b in d["billboards"]:
            b = dict(b)
            for k in ("center", "extent", "tint"):
                if k in b:
                    b[k] = tuple(float(x) for x in b[k])
            try:
                boards.append(Billboard(**b))
            except TypeError as e:
                raise ConfigError(f"bad billboard entry: {e}") from e
        over["billboards"] = tuple(boards)
    return replace(spec, **over) if over else spec

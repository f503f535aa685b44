"""Command line front end: ``gen``, ``solve``, ``eval`` and ``metrics``.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 numerical failure (divergence, degenerate geometry).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, load_config, loss_from_dict, loss_to_dict, scene_from_dict,
                     solver_from_dict, solver_to_dict)
from .errors import EmptyMask, ImageFormatError, NumericalError
from .evaluation import CAP_MODES, MAX_DEPTH, evaluate_both
from .geometry import CameraIntrinsics, RigidPose, load_json, save_json
from .imaging import as_gray, read_image, read_mask, read_pfm, write_pfm
from .losses import (METRICS, PASSIM_VARIANTS, dice_coefficient, metric_map, pe_map,
                     smooth_l1)
from .reprojection import ReflectionPair
from .solver import plane_prior_pose, solve
from .synth import render, save_scene
from .watercomplete import fill_water, poses_from_relative

log = logging.getLogger("reflectdepth")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    scene_cfg = dict(cfg.get("scene", {}))
    for key, val in (("seed", args.seed), ("attenuation", args.attenuation),
                     ("ripple_max_drift", args.drift), ("size", args.size)):
        if val is not None:
            scene_cfg[key] = val
    spec = scene_from_dict(scene_cfg)
    scene = render(spec)
    save_scene(scene, args.out)
    log.info("wrote scene to %s", args.out)
    return EXIT_OK


def _intrinsics(scene_dir: Path, path) -> CameraIntrinsics:
    src = Path(path) if path else scene_dir / "gt.json"
    d = load_json(src)
    return CameraIntrinsics.from_dict(d.get("intrinsics", d))


def cmd_solve(args) -> int:
    scene_dir = Path(args.scene)
    cfg = load_config(args.config)
    loss_tbl = dict(cfg.get("loss", {}))
    if args.metric:
        loss_tbl["metric"] = args.metric
    if args.passim_variant:
        loss_tbl["passim_variant"] = args.passim_variant
    loss_cfg, metric = loss_from_dict(loss_tbl)
    solver_tbl = dict(cfg.get("solver", {}))
    if args.max_iters is not None:
        solver_tbl["max_iters"] = args.max_iters
    if args.prior_height is not None:
        solver_tbl["prior_height"] = args.prior_height
    if args.prior_pitch is not None:
        solver_tbl["prior_pitch_deg"] = args.prior_pitch
    scfg, prior = solver_from_dict(solver_tbl)

    image = read_image(scene_dir / "scene.png")
    mask = read_mask(scene_dir / "mask.png")
    K = _intrinsics(scene_dir, args.intrinsics)
    if args.init_pose:
        init = RigidPose.from_dict(load_json(args.init_pose))
    else:
        init = plane_prior_pose(prior["prior_height"], prior["prior_pitch_deg"])
    scfg = replace(scfg, init_pose=init)
    if args.threads not in (0, 1):
        log.info("--threads %d requested; the solver runs in a single process", args.threads)

    pair = ReflectionPair.from_photo(image, mask, K)
    depth, pose, report = solve(pair, scfg, loss_cfg, metric)
    real, virtual = poses_from_relative(pose)
    done = fill_water(depth, mask, real, virtual, K)

    out = Path(args.out) if args.out else scene_dir / "solution"  # keep the GT depth.pfm intact
    out.mkdir(parents=True, exist_ok=True)
    write_pfm(out / "depth.pfm", done.depth)
    save_json({"relative_pose": pose.to_dict(), "real_pose": real.to_dict(),
               "virtual_pose": virtual.to_dict(), "frame": "real camera"}, out / "pose.json")
    save_json({**done.plane.to_dict(), "frame": "real camera"}, out / "plane.json")
    rep = report.to_dict()
    rep.update({"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "metric": metric,
                "holes": int(done.holes.sum()),
                "config": {"loss": loss_to_dict(loss_cfg, metric),
                           "solver": solver_to_dict(scfg, prior)},
                "init_pose": init.to_dict(), "version": __version__})
    _write_json(rep, out / "report.json")
    log.info("final loss %.6f after %d iterations", report.final_loss, report.iterations)
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = read_pfm(args.pred)
    gt = read_pfm(args.gt)
    mask = read_mask(args.mask) if args.mask else None
    res = evaluate_both(pred, gt, mask, cap=args.cap, median_scale=not args.no_median_scale,
                        cap_mode=args.cap_mode)
    print(json.dumps(res, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .losses import LossConfig, WindowKernel
    a = as_gray(read_image(args.image_a))
    b = as_gray(read_image(args.image_b))
    if a.shape != b.shape:
        raise UsageError("images differ in size")
    cfg = LossConfig(kernel=WindowKernel(args.kernel_size, args.gaussian),
                     passim_variant=args.passim_variant or "rescaled")
    valid = read_mask(args.mask) < 0.5 if args.mask else None
    sel = np.ones(a.shape, bool) if valid is None else valid
    out = {}
    for m in METRICS:
        out[m] = float(metric_map(a, b, cfg, m, valid)[sel].mean())
        out[f"pe_{m}"] = float(pe_map(a, b, cfg, m, valid)[sel].mean())
    out["smooth_l1"] = float(smooth_l1(a, b)[sel].mean())
    if args.masks:
        p, g = (as_gray(read_image(x)) >= 0.5 for x in args.masks)
        out["dice"] = dice_coefficient(p.astype(float), g.astype(float))
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="reflectdepth", description="Depth from water reflections.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    g = sub.add_parser("gen", help="render a synthetic scene directory")
    g.add_argument("--config", help="TOML file with a [scene] section")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--size", type=int)
    g.add_argument("--attenuation", type=float)
    g.add_argument("--drift", type=float, help="ripple_max_drift in pixels")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="recover depth and pose for a scene directory")
    s.add_argument("scene", help="directory holding scene.png, mask.png and gt.json")
    s.add_argument("--config", help="TOML file with [loss] and [solver] sections")
    s.add_argument("--out", help="output directory (default: SCENE/solution)")
    s.add_argument("--metric", choices=METRICS)
    s.add_argument("--passim-variant", choices=PASSIM_VARIANTS)
    s.add_argument("--threads", type=int, default=1, help="0 = auto")
    s.add_argument("--init-pose", help="JSON real->virtual pose (default: plane prior)")
    s.add_argument("--intrinsics", help="JSON intrinsics (default: from gt.json)")
    s.add_argument("--max-iters", type=int)
    s.add_argument("--prior-height", type=float)
    s.add_argument("--prior-pitch", type=float, help="degrees, positive looks down")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="depth metrics of a prediction against ground truth")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("--mask", help="water mask PNG; adds the non-reflective variant")
    e.add_argument("--cap", type=float, default=MAX_DEPTH)
    e.add_argument("--cap-mode", choices=CAP_MODES, default="clamp")
    e.add_argument("--no-median-scale", action="store_true")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("metrics", help="windowed similarity report for an image pair")
    m.add_argument("image_a")
    m.add_argument("image_b")
    m.add_argument("--mask", help="restrict to mask == 0 pixels")
    m.add_argument("--masks", nargs=2, metavar=("PRED", "GT"), help="also report Dice")
    m.add_argument("--kernel-size", type=int, default=5)
    m.add_argument("--gaussian", action="store_true")
    m.add_argument("--passim-variant", choices=PASSIM_VARIANTS)
    m.set_defaults(func=cmd_metrics)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ImageFormatError, json.JSONDecodeError, KeyError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, EmptyMask) as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())

"""Depth error of the loss variants over random scenes, all solved with the same budget.

    python3 demos/loss_ablation.py [--scenes N]
"""
import argparse

import numpy as np

from reflectdepth.evaluation import evaluate
from reflectdepth.geometry import RigidPose, so3_exp
from reflectdepth.losses import LossConfig, WindowKernel
from reflectdepth.reprojection import ReflectionPair
from reflectdepth.solver import SolverConfig, solve
from reflectdepth.synth import random_scene_spec, render
from reflectdepth.watercomplete import complete_depth, poses_from_relative

VARIANTS = {
    "passim+sl1": (LossConfig(), "passim"),
    "ssim+sl1": (LossConfig(), "ssim"),
    "sl1 only": (LossConfig(alpha=0.0), "passim"),
    "passim k3": (LossConfig(kernel=WindowKernel(3)), "passim"),
    "passim k5 gauss": (LossConfig(kernel=WindowKernel(5, True)), "passim"),
}


def perturbed(sc, seed):
    rng = np.random.default_rng(seed)
    ax = rng.normal(size=3)
    dt = rng.normal(size=3)
    T = sc.relative_pose
    return RigidPose(so3_exp(np.radians(3.0) * ax / np.linalg.norm(ax)) @ T.rotation,
                     T.translation + 0.05 * sc.baseline * dt / np.linalg.norm(dt))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenes", type=int, default=5)
    n = ap.parse_args().scenes
    res = {k: [] for k in VARIANTS}
    for seed in range(n):
        sc = render(random_scene_spec(seed))
        pair = ReflectionPair.from_photo(sc.composite, sc.mask, sc.intrinsics)
        init = perturbed(sc, seed + 100)
        for name, (cfg, metric) in VARIANTS.items():
            depth, pose, _ = solve(pair, SolverConfig(init_pose=init), cfg, metric)
            full = complete_depth(depth, sc.mask, *poses_from_relative(pose), sc.intrinsics)
            res[name].append(evaluate(full, sc.depth).abs_rel)
        print(f"scene {seed}: " + "  ".join(f"{k} {v[-1]:.3f}" for k, v in res.items()))
    print("mean AbsRel:")
    for k, v in res.items():
        print(f"  {k:<16} {np.mean(v):.4f} +- {np.std(v) / np.sqrt(len(v)):.4f}")


if __name__ == "__main__":
    main()

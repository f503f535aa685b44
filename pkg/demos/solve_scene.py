"""Render the default scene, solve from a perturbed pose, fill the water, report errors.

    python3 demos/solve_scene.py [--seed N]
"""
import argparse
import time

import numpy as np

from reflectdepth.evaluation import evaluate, rotation_error_deg, translation_error
from reflectdepth.geometry import RigidPose, so3_exp
from reflectdepth.reprojection import ReflectionPair
from reflectdepth.solver import SolverConfig, solve
from reflectdepth.synth import default_scene_spec, render
from reflectdepth.watercomplete import complete_depth, poses_from_relative


def perturb(pose: RigidPose, baseline: float, rng, deg=3.0, frac=0.05) -> RigidPose:
    ax = rng.normal(size=3)
    ax /= np.linalg.norm(ax)
    dt = rng.normal(size=3)
    dt *= frac * baseline / np.linalg.norm(dt)
    return RigidPose(so3_exp(np.radians(deg) * ax) @ pose.rotation, pose.translation + dt)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sc = render(default_scene_spec(args.seed))
    pair = ReflectionPair.from_photo(sc.composite, sc.mask, sc.intrinsics)
    init = perturb(sc.relative_pose, sc.baseline, np.random.default_rng(100 + args.seed))

    t0 = time.time()
    depth, pose, rep = solve(pair, SolverConfig(init_pose=init))
    full = complete_depth(depth, sc.mask, *poses_from_relative(pose), sc.intrinsics)
    print(f"solved in {time.time() - t0:.1f}s, {rep.iterations} iterations, "
          f"loss {rep.loss_trajectory[0]:.4f} -> {rep.final_loss:.4f}")

    gt = sc.relative_pose
    print(f"rotation error    init {rotation_error_deg(init.rotation, gt.rotation):.2f} deg, "
          f"final {rotation_error_deg(pose.rotation, gt.rotation):.2f} deg")
    d = sc.camera_plane_distance
    print(f"translation error init {translation_error(init.translation, gt.translation) / d:.3f}, "
          f"final {translation_error(pose.translation, gt.translation) / d:.3f} (fraction of height)")
    for region in ("all", "non_reflective"):
        m = evaluate(full, sc.depth, sc.mask, region=region)
        print(f"{region:>14}: AbsRel {m.abs_rel:.4f}  RMS {m.rms:.3f}  d1 {m.delta1:.1f}%")


if __name__ == "__main__":
    main()

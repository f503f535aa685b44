"""PASSIM against SSIM as the reflection dims.

Warps the reflection with ground-truth geometry and scores it against the real
view for several attenuation factors. PASSIM stays flat (exactly so as the
stabiliser goes to zero); SSIM falls with the brightness mismatch.

    python3 demos/metric_contrast.py
"""
import numpy as np
from scipy.ndimage import binary_dilation

from reflectdepth.losses import LossConfig, WindowKernel, metric_map, window_moments
from reflectdepth.reprojection import ReflectionPair, build_warp, reprojection_loss, synthesize
from reflectdepth.synth import default_scene_spec, render


def scores(rho, eps):
    ref = render(default_scene_spec(0))
    depth = np.where(ref.mask == 0, ref.depth, 1.0)
    sc = render(default_scene_spec(0, attenuation=rho))
    pair = ReflectionPair.from_photo(sc.composite, sc.mask, sc.intrinsics)
    valid = reprojection_loss(pair, depth, sc.relative_pose, LossConfig(smoothness_weight=0)).valid
    valid &= ~binary_dilation(sc.mask == 1)  # shoreline pixels mix in water samples
    y, _ = synthesize(pair.virtual_image, build_warp(depth, sc.relative_pose, sc.intrinsics))
    x = pair.real_image
    sel = valid & (np.sqrt(window_moments(x, y, WindowKernel(), valid).var_x) >= 0.02)
    cfg = LossConfig(epsilon=eps)
    return [metric_map(x, y, cfg, m, valid)[sel].mean() for m in ("passim", "ssim")]


def main():
    print(" rho   passim(eps=1e-12)  passim(eps=1e-4)  ssim")
    for rho in (1.0, 0.9, 0.8, 0.7, 0.6, 0.5):
        p0, s = scores(rho, 1e-12)
        p1, _ = scores(rho, 1e-4)
        print(f"{rho:4.1f}   {p0:.6f}           {p1:.6f}          {s:.4f}")


if __name__ == "__main__":
    main()

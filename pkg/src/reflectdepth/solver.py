"""Direct optimization of per-pixel depth and the real->virtual pose.

Depth is parameterized as log-inverse-depth ``z`` with
``d = 1 / (1/d_max + e^z (1/d_min - 1/d_max))`` so it stays in
``(0, d_max]``. Depth takes Adam steps, the pose takes heavy-ball momentum
steps on a left-multiplied axis-angle increment, and a backtracking guard
halves both steps whenever the loss would go up.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import Divergence, EmptyMask, NoOverlap
from .geometry import Plane, RigidPose, reflect_pose_about_plane, relative_pose, so3_left_jacobian
from .losses import (LossConfig, smooth_l1_grad, smoothness_inverse_depth, structural_term_grad,
                     window_filter_adjoint)
from .imaging import downsample2
from .reprojection import ReflectionPair, forward, pyramid

log = logging.getLogger(__name__)

DEPTH_MIN = 0.1
DEPTH_MAX = 120.0


def depth_from_params(z, d_min: float = DEPTH_MIN, d_max: float = DEPTH_MAX) -> np.ndarray:
    a, b = 1.0 / d_max, 1.0 / d_min
    return 1.0 / (a + np.exp(z) * (b - a))


def params_from_depth(d, d_min: float = DEPTH_MIN, d_max: float = DEPTH_MAX) -> np.ndarray:
    a, b = 1.0 / d_max, 1.0 / d_min
    d = np.asarray(d, dtype=float)
    return np.log((1.0 / d - a) / (b - a))


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 200
    pyramid_levels: int = 3
    depth_lr: float = 3e-2
    pose_lr: float = 1e-3
    pose_momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    stop_rel_tol: float = 1e-6
    stop_window: int = 20
    max_halvings: int = 5
    init_depth: float = 10.0
    init_pose: RigidPose | None = None
    depth_min: float = DEPTH_MIN
    depth_max: float = DEPTH_MAX
    min_valid_fraction: float = 0.01

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not 1 <= self.pyramid_levels <= 6:
            raise ValueError("pyramid_levels must be within 1..6")
        for name in ("depth_lr", "pose_lr", "init_depth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.pose_momentum < 1:
            raise ValueError("pose_momentum must be in [0, 1)")
        if not 0 < self.depth_min < self.init_depth < self.depth_max:
            raise ValueError("need depth_min < init_depth < depth_max")


@dataclass
class SolveReport:
    final_loss: float
    loss_trajectory: list[float]
    valid_fraction_trajectory: list[float]
    level_trajectory: list[int]
    final_pose: RigidPose
    iterations: int
    rejected_steps: int = 0
    levels: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "final_loss": self.final_loss,
            "iterations": self.iterations,
            "rejected_steps": self.rejected_steps,
            "final_pose": self.final_pose.to_dict(),
            "loss_trajectory": self.loss_trajectory,
            "valid_fraction_trajectory": self.valid_fraction_trajectory,
            "level_trajectory": self.level_trajectory,
            "levels": self.levels,
        }


def _backward(pair: ReflectionPair, f, pose: RigidPose, cfg: LossConfig, metric: str):
    """Gradients of ``f.total`` w.r.t. inverse depth and a left pose increment."""
    K = pair.intrinsics
    x = pair.real_image
    kernel = cfg.kernel
    g_q = np.zeros_like(f.inv_depth)
    g_pose = np.zeros(6)
    Xp = f.Xp
    for v in f.views:
        valid = v.valid
        G = valid * structural_term_grad(v.M, cfg.alpha) / v.n
        W = v.moments.weight
        invW = np.divide(1.0, W, out=np.zeros_like(W), where=valid)
        dM_dmy, dM_dB, dM_dC = v.dM
        gy = (window_filter_adjoint(G * dM_dmy * invW, kernel)
              + 2.0 * v.y * window_filter_adjoint(G * dM_dB * invW, kernel)
              + x * window_filter_adjoint(G * dM_dC * invW, kernel))
        gy = valid * (gy + (1 - cfg.alpha) * smooth_l1_grad(x, v.y) / v.n)
        gpx = gy * v.dx
        gpy = gy * v.dy
        z = np.where(valid, Xp[..., 2], 1.0)
        gX = np.stack([gpx * K.fx / z, gpy * K.fy / z,
                       -(gpx * K.fx * Xp[..., 0] + gpy * K.fy * Xp[..., 1]) / z**2], axis=-1)
        gX *= valid[..., None]
        rotated = Xp - pose.translation
        g_pose[:3] += np.cross(rotated, gX).reshape(-1, 3).sum(axis=0)
        g_pose[3:] += gX.reshape(-1, 3).sum(axis=0)
        # X = ray / q  =>  dX'/dq = -R X / q
        g_q += -np.einsum("hwc,hwc->hw", gX @ pose.rotation, f.X) / f.inv_depth
    if cfg.smoothness_weight > 0:
        _, gs = smoothness_inverse_depth(f.inv_depth, x, f.target, with_grad=True)
        g_q += cfg.smoothness_weight * gs
    return g_q, g_pose


def _evaluate(pair, z, pose, loss_cfg, metric, scfg: SolverConfig, with_grad=True,
              valid_override=None, cells_override=None):
    a, b = 1.0 / scfg.depth_max, 1.0 / scfg.depth_min
    q = a + np.exp(z) * (b - a)
    f = forward(pair, q, pose, loss_cfg, metric, valid_override, cells_override)
    if not with_grad:
        return f, None, None
    g_q, g_pose = _backward(pair, f, pose, loss_cfg, metric)
    return f, g_q * (q - a), g_pose


def loss_gradients(pair: ReflectionPair, depth_params, pose_params, cfg: LossConfig = LossConfig(),
                   metric: str = "passim", solver_cfg: SolverConfig = SolverConfig(),
                   valid_override=None, cells_override=None):
    """Loss and its gradients w.r.t. log-inverse-depth and the 6-vector pose.

    ``pose_params`` is (axis-angle, translation) of the real->virtual
    transform; the rotation gradient is taken w.r.t. the axis-angle vector
    itself, not a local increment. ``valid_override`` and ``cells_override``
    freeze the sampling state (see :func:`reprojection.forward`).
    """
    pose_params = np.asarray(pose_params, dtype=float)
    pose = RigidPose.from_params(pose_params)
    f, gz, g_local = _evaluate(pair, np.asarray(depth_params, dtype=float), pose, cfg, metric,
                               solver_cfg, valid_override=valid_override,
                               cells_override=cells_override)
    g = g_local.copy()
    g[:3] = so3_left_jacobian(pose_params[:3]).T @ g_local[:3]
    return f.total, gz, g


def plane_prior_pose(height: float = 0.5, pitch_deg: float = 0.0) -> RigidPose:
    """Real->virtual pose for a horizontal mirror ``height`` below the camera.

    The camera is taken as level except for a downward ``pitch_deg``.
    """
    if not height > 0:
        raise ValueError("height must be positive")
    p = np.radians(pitch_deg)
    up = np.array([0.0, -np.cos(p), -np.sin(p)])
    real = RigidPose.identity()
    virtual = reflect_pose_about_plane(real, Plane(up, -height))
    return relative_pose(real, virtual)


def _upsample_params(z, shape):
    """Bilinear upsampling of a parameter field to the next finer level."""
    H, W = shape
    ys, xs = np.mgrid[0:H, 0:W].astype(float)
    coords = np.stack([(ys - 0.5) / 2.0, (xs - 0.5) / 2.0])
    return ndimage.map_coordinates(z, coords, order=1, mode="nearest")


def _check_mask(pair: ReflectionPair):
    mask = pair.water_mask
    if not np.any(mask == 1):
        raise EmptyMask("water mask is empty")
    if not np.any(mask == 0):
        raise EmptyMask("water mask covers the whole frame")


def solve(pair: ReflectionPair, cfg: SolverConfig = SolverConfig(),
          loss_cfg: LossConfig = LossConfig(), metric: str = "passim", init_depth=None):
    """Coarse-to-fine joint depth/pose optimization.

    Returns ``(depth, pose, report)``; depth is full resolution in meters
    and pose maps real-camera coordinates to virtual-camera coordinates.
    ``init_depth`` optionally replaces the constant ``cfg.init_depth`` with a
    full-resolution field (meters).
    """
    _check_mask(pair)
    pose = cfg.init_pose if cfg.init_pose is not None else RigidPose.identity()
    z0 = float(params_from_depth(cfg.init_depth, cfg.depth_min, cfg.depth_max))
    levels = pyramid(pair, cfg.pyramid_levels) if cfg.max_iters > 0 else [pair]
    losses: list[float] = []
    fractions: list[float] = []
    level_ids: list[int] = []
    level_info: list[dict] = []
    iterations = 0
    rejected = 0
    z = None

    for li in range(len(levels) - 1, -1, -1):
        lp = levels[li]
        if z is None and init_depth is not None:
            z = params_from_depth(np.clip(init_depth, cfg.depth_min, cfg.depth_max),
                                  cfg.depth_min, cfg.depth_max)
            if z.shape != pair.shape:
                raise ValueError("init_depth and images differ in size")
            for _ in range(li):
                z = downsample2(z)
        elif z is None:
            z = np.full(lp.shape, z0)
        else:
            z = _upsample_params(z, lp.shape)
        try:
            f, gz, gp = _evaluate(lp, z, pose, loss_cfg, metric, cfg)
        except NoOverlap as e:
            raise Divergence(str(e)) from e
        frac = _valid_fraction(f, lp)
        losses.append(f.total)
        fractions.append(frac)
        level_ids.append(li)
        m = np.zeros_like(z)
        s = np.zeros_like(z)
        vel = np.zeros(6)
        t_adam = 0
        start = len(losses) - 1
        it = 0
        for it in range(cfg.max_iters):
            t_adam += 1
            m = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * gz
            s = cfg.adam_beta2 * s + (1 - cfg.adam_beta2) * gz * gz
            mhat = m / (1 - cfg.adam_beta1**t_adam)
            shat = s / (1 - cfg.adam_beta2**t_adam)
            step_z = -cfg.depth_lr * mhat / (np.sqrt(shat) + cfg.adam_eps)
            vel = cfg.pose_momentum * vel + gp
            step_p = -cfg.pose_lr * vel
            accepted = False
            scale = 1.0
            for _ in range(cfg.max_halvings + 1):
                z_new = z + scale * step_z
                pose_new = pose.retract(scale * step_p)
                try:
                    f_new, gz_new, gp_new = _evaluate(lp, z_new, pose_new, loss_cfg, metric, cfg)
                except NoOverlap:
                    scale *= 0.5
                    continue
                if f_new.total <= f.total:
                    accepted = True
                    break
                scale *= 0.5
            if accepted:
                z, pose, f, gz, gp = z_new, pose_new, f_new, gz_new, gp_new
                frac = _valid_fraction(f, lp)
            else:
                # momentum directions need not descend; restart both optimizers so
                # the next step is a plain (sign-)gradient step
                rejected += 1
                vel = np.zeros(6)
                m = np.zeros_like(z)
                s = np.zeros_like(z)
                t_adam = 0
            iterations += 1
            losses.append(f.total)
            fractions.append(frac)
            level_ids.append(li)
            if frac < cfg.min_valid_fraction:
                raise Divergence(f"valid fraction fell to {frac:.4f}")
            k = cfg.stop_window
            if len(losses) - start > k:
                old = losses[-k - 1]
                if abs(old - losses[-1]) <= cfg.stop_rel_tol * max(abs(old), 1e-300):
                    break
        level_info.append({"level": li, "shape": list(lp.shape), "iterations": it + 1 if cfg.max_iters else 0,
                           "loss": f.total})
        log.debug("level %d: loss %.6f after %d iterations", li, f.total, it + 1)

    depth = depth_from_params(z, cfg.depth_min, cfg.depth_max)
    report = SolveReport(final_loss=losses[-1], loss_trajectory=losses,
                         valid_fraction_trajectory=fractions, level_trajectory=level_ids,
                         final_pose=pose, iterations=iterations, rejected_steps=rejected,
                         levels=level_info)
    return depth, pose, report


def _valid_fraction(f, pair: ReflectionPair) -> float:
    n_target = max(int(pair.target_mask.sum()), 1)
    return f.views[0].n / n_target

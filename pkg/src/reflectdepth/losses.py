"""Windowed similarity metrics and the photometric error built from them.

Full-image metric maps use a sliding window at every pixel. Window samples
that fall outside the image or outside the ``valid`` mask are dropped and the
remaining weights renormalized, so borders and masked regions need no padding
convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .errors import EmptyRegion
from .imaging import gradients

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
METRICS = ("passim", "ssim")
PASSIM_VARIANTS = ("rescaled", "verbatim")


@dataclass(frozen=True)
class WindowKernel:
    size: int = 5
    gaussian: bool = False

    def __post_init__(self):
        if self.size < 3 or self.size % 2 != 1:
            raise ValueError(f"kernel size must be odd and >= 3, got {self.size}")

    @property
    def sigma(self) -> float:
        return self.size / 6.0

    @property
    def weights(self) -> np.ndarray:
        if not self.gaussian:
            return np.full((self.size, self.size), 1.0 / self.size**2)
        r = np.arange(self.size) - self.size // 2
        g = np.exp(-0.5 * (r / self.sigma) ** 2)
        w = np.outer(g, g)
        return w / w.sum()


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.75
    epsilon: float = 1e-4
    kernel: WindowKernel = field(default_factory=WindowKernel)
    smoothness_weight: float = 1e-3
    passim_variant: str = "rescaled"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.smoothness_weight < 0:
            raise ValueError("smoothness_weight must be nonnegative")
        if self.passim_variant not in PASSIM_VARIANTS:
            raise ValueError(f"passim_variant must be one of {PASSIM_VARIANTS}")


class WindowStats(NamedTuple):
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    sigma_xy: float


class Moments(NamedTuple):
    """Per-pixel weighted window statistics (variances, not deviations)."""

    mu_x: np.ndarray
    mu_y: np.ndarray
    var_x: np.ndarray
    var_y: np.ndarray
    cov_xy: np.ndarray
    weight: np.ndarray


def window_stats(x, y, kernel: WindowKernel) -> WindowStats:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = kernel.weights
    if x.shape != w.shape or y.shape != w.shape:
        raise ValueError(f"patches must be {w.shape}, got {x.shape} and {y.shape}")
    mx = np.sum(w * x)
    my = np.sum(w * y)
    dx, dy = x - mx, y - my
    return WindowStats(mx, my, np.sqrt(np.sum(w * dx * dx)), np.sqrt(np.sum(w * dy * dy)),
                       np.sum(w * dx * dy))


def window_filter(a: np.ndarray, kernel: WindowKernel) -> np.ndarray:
    return ndimage.correlate(a, kernel.weights, mode="constant", cval=0.0)


def window_filter_adjoint(a: np.ndarray, kernel: WindowKernel) -> np.ndarray:
    return ndimage.convolve(a, kernel.weights, mode="constant", cval=0.0)


def window_moments(x, y, kernel: WindowKernel, valid=None) -> Moments:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.ones_like(x) if valid is None else np.asarray(valid, dtype=float)
    W = window_filter(v, kernel)
    inv = np.divide(1.0, W, out=np.zeros_like(W), where=W > 1e-12)
    xv, yv = x * v, y * v
    mx = window_filter(xv, kernel) * inv
    my = window_filter(yv, kernel) * inv
    vx = np.maximum(window_filter(xv * x, kernel) * inv - mx * mx, 0.0)
    vy = np.maximum(window_filter(yv * y, kernel) * inv - my * my, 0.0)
    cxy = window_filter(xv * y, kernel) * inv - mx * my
    return Moments(mx, my, vx, vy, cxy, W)


def _passim_score(mx, my, vx, vy, cxy, eps, variant):
    k = 2.0 if variant == "rescaled" else 1.0
    return (k * mx * my * cxy + eps) / (vx * my**2 + vy * mx**2 + eps)


def _ssim_score(mx, my, vx, vy, cxy):
    return ((2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)
            / ((mx**2 + my**2 + SSIM_C1) * (vx + vy + SSIM_C2)))


def passim(x, y, cfg: LossConfig = LossConfig()) -> float:
    """Photometric-adaptive SSIM of two kernel-sized patches.

    The ``verbatim`` variant is ``(mx my sxy + eps) / (sx^2 my^2 + sy^2 mx^2 + eps)``;
    ``rescaled`` doubles the first numerator term so identical patches score 1.
    """
    s = window_stats(x, y, cfg.kernel)
    return float(_passim_score(s.mu_x, s.mu_y, s.sigma_x**2, s.sigma_y**2, s.sigma_xy,
                               cfg.epsilon, cfg.passim_variant))


def ssim(x, y, cfg: LossConfig = LossConfig()) -> float:
    s = window_stats(x, y, cfg.kernel)
    return float(_ssim_score(s.mu_x, s.mu_y, s.sigma_x**2, s.sigma_y**2, s.sigma_xy))


def metric_map(x, y, cfg: LossConfig, metric: str = "passim", valid=None) -> np.ndarray:
    m = window_moments(x, y, cfg.kernel, valid)
    if metric == "passim":
        out = _passim_score(m.mu_x, m.mu_y, m.var_x, m.var_y, m.cov_xy,
                            cfg.epsilon, cfg.passim_variant)
    elif metric == "ssim":
        out = _ssim_score(m.mu_x, m.mu_y, m.var_x, m.var_y, m.cov_xy)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    if valid is not None:
        out = np.where(np.asarray(valid, dtype=bool), out, 0.0)
    return out


def passim_map(x, y, cfg: LossConfig = LossConfig(), valid=None) -> np.ndarray:
    return metric_map(x, y, cfg, "passim", valid)


def ssim_map(x, y, cfg: LossConfig = LossConfig(), valid=None) -> np.ndarray:
    return metric_map(x, y, cfg, "ssim", valid)


def metric_partials(m: Moments, cfg: LossConfig, metric: str):
    """Score and its partials w.r.t. the y-side raw moments.

    Returns ``(M, dM/dmu_y, dM/dE[y^2], dM/dE[xy])`` with the x-side moments
    held fixed.
    """
    mx, my, vx, vy, cxy = m.mu_x, m.mu_y, m.var_x, m.var_y, m.cov_xy
    if metric == "passim":
        eps = cfg.epsilon
        k = 2.0 if cfg.passim_variant == "rescaled" else 1.0
        num = k * mx * my * cxy + eps
        den = vx * my**2 + vy * mx**2 + eps
        M = num / den
        dnum_dmy = k * mx * (cxy - mx * my)
        dnum_dC = k * mx * my
        dden_dmy = 2 * my * (vx - mx**2)
        dden_dB = mx**2
        return (M, (dnum_dmy - M * dden_dmy) / den, -M * dden_dB / den, dnum_dC / den)
    if metric == "ssim":
        a1 = 2 * mx * my + SSIM_C1
        a2 = 2 * cxy + SSIM_C2
        b1 = mx**2 + my**2 + SSIM_C1
        b2 = vx + vy + SSIM_C2
        den = b1 * b2
        M = a1 * a2 / den
        d_my = (2 * mx * a2 + a1 * (-2 * mx)) / den - M * (2 * my * b2 + b1 * (-2 * my)) / den
        d_B = -M * b1 / den
        d_C = 2 * a1 / den
        return M, d_my, d_B, d_C
    raise ValueError(f"unknown metric {metric!r}")


def smooth_l1(a, b):
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    return np.where(d < 1.0, 0.5 * d * d, d - 0.5)


def smooth_l1_grad(a, b):
    """Derivative of ``smooth_l1(a, b)`` with respect to ``b``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return np.where(np.abs(d) < 1.0, -d, -np.sign(d))


def structural_term(M, alpha):
    return 0.5 * alpha * np.sqrt(np.clip(1.0 - M, 0.0, 2.0))


def structural_term_grad(M, alpha):
    """d/dM of :func:`structural_term`; zero where the clamp is active."""
    r = 1.0 - M
    inside = (r > 0) & (r < 2)
    return np.where(inside, -0.25 * alpha / np.sqrt(np.where(inside, r, 1.0)), 0.0)


def pe(x, y, cfg: LossConfig = LossConfig(), metric: str = "passim") -> float:
    """Photometric error between two aligned kernel-sized patches."""
    score = passim(x, y, cfg) if metric == "passim" else ssim(x, y, cfg)
    return float(structural_term(score, cfg.alpha) + (1 - cfg.alpha) * np.mean(smooth_l1(x, y)))


def pe_map(x, y, cfg: LossConfig = LossConfig(), metric: str = "passim", valid=None) -> np.ndarray:
    """Per-pixel photometric error: window metric term plus the pixel's SmoothL1."""
    M = metric_map(x, y, cfg, metric, valid)
    out = structural_term(M, cfg.alpha) + (1 - cfg.alpha) * smooth_l1(x, y)
    if valid is not None:
        out = np.where(np.asarray(valid, dtype=bool), out, 0.0)
    return out


def dice_coefficient(p, g) -> float:
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    den = np.sum(p * p) + np.sum(g * g)
    if den == 0:
        return 1.0
    return float(2.0 * np.sum(p * g) / den)


def dice_loss(p, g, eps: float = 1e-4) -> float:
    p = np.asarray(p, dtype=float)
    g = np.asarray(g, dtype=float)
    if p.shape != g.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {g.shape}")
    return float(1.0 - (2.0 * np.sum(p * g) + eps) / (np.sum(p * p) + np.sum(g * g) + eps))


def smoothness_inverse_depth(q, img, valid, with_grad: bool = False):
    """Edge-aware smoothness of inverse depth ``q`` and optionally d/dq.

    ``q`` is normalized by its mean over ``valid``; a difference term counts
    only when both of its pixels are valid.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(valid, dtype=bool)
    n = int(v.sum())
    if n == 0:
        raise EmptyRegion("smoothness has no valid pixels")
    qbar = q[v].mean()
    ix, iy = gradients(img)
    qx, qy = gradients(q)
    px = np.zeros_like(v)
    py = np.zeros_like(v)
    px[:, :-1] = v[:, :-1] & v[:, 1:]
    py[:-1, :] = v[:-1, :] & v[1:, :]
    ex = np.exp(-np.abs(ix)) * px
    ey = np.exp(-np.abs(iy)) * py
    S = np.sum(ex * np.abs(qx)) + np.sum(ey * np.abs(qy))
    value = S / (n * qbar)
    if not with_grad:
        return value
    gx = ex * np.sign(qx)
    gy = ey * np.sign(qy)
    dS = np.zeros_like(q)
    dS[:, 1:] += gx[:, :-1]
    dS[:, :-1] -= gx[:, :-1]
    dS[1:, :] += gy[:-1, :]
    dS[:-1, :] -= gy[:-1, :]
    grad = dS / (n * qbar) - v * (S / (n * qbar**2 * n))
    return value, grad


def edge_aware_smoothness(depth, img, mask=None) -> float:
    """Smoothness of mean-normalized inverse depth, down-weighted at image edges."""
    depth = np.asarray(depth, dtype=float)
    valid = np.ones(depth.shape, bool) if mask is None else np.asarray(mask, dtype=bool)
    valid = valid & (depth > 0)
    q = np.divide(1.0, depth, out=np.zeros_like(depth), where=depth > 0)
    return float(smoothness_inverse_depth(q, img, valid))

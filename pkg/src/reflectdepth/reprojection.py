"""View synthesis from the reflection and the photometric objective.

The reflection in a photo is the scene seen from the mirrored (virtual)
camera. Real-region pixels are lifted with the current depth, moved into the
virtual camera by ``pose`` (real -> virtual), projected, and compared to the
reflection sampled there.
"""
from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace
from typing import NamedTuple

import numpy as np

from .errors import NoOverlap
from .geometry import CameraIntrinsics, RigidPose, pixel_grid, pixel_rays
from .imaging import (BORDER_TOL, as_gray, bilinear_sample, bilinear_sample_grad, downsample2,
                      sample_cells)
from .losses import (LossConfig, metric_partials, smooth_l1, smoothness_inverse_depth,
                     structural_term, window_moments)

MIN_Z = 1e-9


def mirror_rows(img: np.ndarray, cy: float) -> tuple[np.ndarray, np.ndarray]:
    """Flip an image about the principal row (``v -> 2 cy - v``).

    This is the image-side half of the virtual-camera convention in
    :mod:`reflectdepth.geometry`. Exact when ``cy = (H - 1) / 2``.
    """
    img = np.asarray(img, dtype=float)
    H, W = img.shape
    grid = pixel_grid(H, W)
    s = bilinear_sample(img, grid[..., 0], 2.0 * cy - grid[..., 1])
    return s.value, s.valid


@dataclass(frozen=True)
class ReflectionPair:
    """Target (real) and source (reflection) views of one photo.

    ``water_mask`` is in photo coordinates and may be fractional after
    downsampling; only pixels with mask exactly 0 are targets.
    ``source_mask`` marks virtual-image pixels that are fully reflection.
    """

    real_image: np.ndarray
    virtual_image: np.ndarray
    water_mask: np.ndarray
    intrinsics: CameraIntrinsics
    source_mask: np.ndarray

    @classmethod
    def from_photo(cls, image, water_mask, K: CameraIntrinsics) -> "ReflectionPair":
        gray = as_gray(image)
        mask = np.asarray(water_mask, dtype=float)
        if mask.shape != gray.shape:
            raise ValueError("mask and image sizes differ")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("water mask must be binary")
        virtual, ok = mirror_rows(gray, K.cy)
        vmask, vok = mirror_rows(mask, K.cy)
        return cls(gray, virtual, mask, K, ok & vok & (vmask == 1.0))

    @property
    def shape(self) -> tuple[int, int]:
        return self.real_image.shape

    @property
    def target_mask(self) -> np.ndarray:
        return self.water_mask == 0.0

    def downsampled(self) -> "ReflectionPair":
        return ReflectionPair(downsample2(self.real_image), downsample2(self.virtual_image),
                              downsample2(self.water_mask), self.intrinsics.downsampled(),
                              downsample2(self.source_mask.astype(float)) == 1.0)

    def views(self):
        """Source views feeding the photometric sum; a photo has one reflection."""
        return [(self.virtual_image, self.source_mask)]


def pyramid(pair: ReflectionPair, levels: int) -> list[ReflectionPair]:
    """Finest first."""
    out = [pair]
    for _ in range(levels - 1):
        out.append(out[-1].downsampled())
    return out


class WarpField(NamedTuple):
    coords: np.ndarray
    valid: np.ndarray


def _source_ok(source_mask, x, y):
    """True where every pixel of the sampling cell is in ``source_mask``."""
    H, W = source_mask.shape
    x0 = np.clip(np.floor(x), 0, W - 1).astype(np.intp)
    y0 = np.clip(np.floor(y), 0, H - 1).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    m = source_mask
    return m[y0, x0] & m[y0, x1] & m[y1, x0] & m[y1, x1]


def _warp_points(inv_depth, pose: RigidPose, K: CameraIntrinsics):
    H, W = inv_depth.shape
    rays = pixel_rays(K, pixel_grid(H, W))
    X = rays / inv_depth[..., None]
    Xp = X @ pose.rotation.T + pose.translation
    z = Xp[..., 2]
    front = z > MIN_Z
    zs = np.where(front, z, 1.0)
    px = K.fx * Xp[..., 0] / zs + K.cx
    py = K.fy * Xp[..., 1] / zs + K.cy
    return X, Xp, front, px, py


def build_warp(depth, pose: RigidPose, K: CameraIntrinsics, source_mask=None) -> WarpField:
    depth = np.asarray(depth, dtype=float)
    H, W = depth.shape
    _, _, front, px, py = _warp_points(1.0 / depth, pose, K)
    t = BORDER_TOL
    inb = (px >= -t) & (px <= W - 1 + t) & (py >= -t) & (py <= H - 1 + t)
    valid = front & inb
    if source_mask is not None:
        valid &= _source_ok(np.asarray(source_mask, dtype=bool), px, py)
    coords = np.stack([np.where(valid, px, 0.0), np.where(valid, py, 0.0)], axis=-1)
    return WarpField(coords, valid)


def synthesize(source, warp: WarpField) -> tuple[np.ndarray, np.ndarray]:
    s = bilinear_sample(np.asarray(source, dtype=float), warp.coords[..., 0], warp.coords[..., 1])
    valid = warp.valid & s.valid
    return np.where(valid, s.value, 0.0), valid


class LossResult(NamedTuple):
    total: float
    photometric: float
    smoothness: float
    loss_map: np.ndarray
    valid: np.ndarray

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean())


def forward(pair: ReflectionPair, inv_depth, pose: RigidPose, cfg: LossConfig,
            metric: str = "passim", valid_override=None, cells_override=None) -> SimpleNamespace:
    """Evaluate the objective, keeping what the backward pass needs.

    ``valid_override`` pins the compared pixel set (intersected with pixels
    that still sample in-bounds) and ``cells_override`` the bilinear cells.
    Together they make the loss smooth around a state, for finite-difference
    checks of the within-cell gradient.
    """
    K = pair.intrinsics
    x = pair.real_image
    target = pair.target_mask
    X, Xp, front, px, py = _warp_points(inv_depth, pose, K)

    photometric = 0.0
    views = []
    for source, source_mask in pair.views():
        s = bilinear_sample_grad(source, px, py, cells_override)
        if valid_override is None:
            valid = target & front & s.valid & _source_ok(source_mask, px, py)
        else:
            valid = np.asarray(valid_override, dtype=bool) & front & s.valid
        n = int(valid.sum())
        if n == 0:
            raise NoOverlap("no real-region pixel lands in the reflection")
        y = s.value
        mom = window_moments(x, y, cfg.kernel, valid)
        M, dM_dmy, dM_dB, dM_dC = metric_partials(mom, cfg, metric)
        pmap = np.where(valid, structural_term(M, cfg.alpha)
                        + (1 - cfg.alpha) * smooth_l1(x, y), 0.0)
        photometric += pmap.sum() / n
        views.append(SimpleNamespace(y=y, dx=s.dx, dy=s.dy, valid=valid, n=n, moments=mom,
                                     M=M, dM=(dM_dmy, dM_dB, dM_dC), loss_map=pmap,
                                     cells=sample_cells(source.shape, px, py)))

    smooth = 0.0
    if cfg.smoothness_weight > 0:
        smooth = smoothness_inverse_depth(inv_depth, x, target)
    total = photometric + cfg.smoothness_weight * smooth
    return SimpleNamespace(total=float(total), photometric=float(photometric),
                           smoothness=float(smooth), X=X, Xp=Xp, views=views,
                           target=target, inv_depth=inv_depth)


def reprojection_loss(pair: ReflectionPair, depth, pose: RigidPose, cfg: LossConfig = LossConfig(),
                      metric: str = "passim") -> LossResult:
    """Photometric loss of ``pose``/``depth`` plus weighted edge-aware smoothness.

    ``loss_map`` holds the per-pixel photometric error; its mean over
    ``valid`` is ``photometric``.
    """
    depth = np.asarray(depth, dtype=float)
    if depth.shape != pair.shape:
        raise ValueError("depth and images differ in size")
    inv = np.divide(1.0, depth, out=np.full_like(depth, 1.0), where=depth > 0)
    f = forward(pair, inv, pose, cfg, metric)
    v = f.views[0]
    return LossResult(f.total, f.photometric, f.smoothness, v.loss_map, v.valid)

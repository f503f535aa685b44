"""Standard monocular depth metrics with median scaling and a depth cap."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptyRegion, NumericalError

MIN_DEPTH = 1e-3
MAX_DEPTH = 120.0
REGIONS = ("all", "non_reflective")
CAP_MODES = ("clamp", "exclude")


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rms: float
    rms_log: float
    delta1: float
    delta2: float
    delta3: float
    count: int
    scale: float

    def to_dict(self) -> dict:
        return asdict(self)


def region_mask(shape, region: str = "all", mask=None) -> np.ndarray:
    if region not in REGIONS:
        raise ValueError(f"region must be one of {REGIONS}")
    if region == "all":
        return np.ones(shape, dtype=bool)
    if mask is None:
        raise ValueError("non_reflective region needs a water mask")
    mask = np.asarray(mask)
    if mask.shape != tuple(shape):
        raise ValueError("mask and depth differ in size")
    return mask < 0.5


def evaluate(pred, gt, mask=None, region: str = "all", cap: float = MAX_DEPTH,
             median_scale: bool = True, cap_mode: str = "clamp") -> DepthMetrics:
    """AbsRel, SqRel, RMS, RMS(log) (natural log) and delta accuracies in percent.

    Pixels with ``gt <= 0`` carry no ground truth and are skipped. With
    ``median_scale`` the prediction is first multiplied by
    ``median(gt) / median(pred)`` over the evaluated pixels; both maps are then
    clamped to ``[1e-3, cap]``. ``cap_mode="exclude"`` drops pixels whose
    ground truth lies beyond ``cap`` instead of clamping them.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if cap_mode not in CAP_MODES:
        raise ValueError(f"cap_mode must be one of {CAP_MODES}")
    sel = region_mask(gt.shape, region, mask) & np.isfinite(gt) & (gt > 0) & np.isfinite(pred)
    if cap_mode == "exclude":
        sel &= gt <= cap
    if not sel.any():
        raise EmptyRegion(f"no pixels with ground truth in region {region!r}")
    p, g = pred[sel], gt[sel]
    scale = 1.0
    if median_scale:
        mp = np.median(p)
        if not mp > 0:
            raise NumericalError("median predicted depth is not positive")
        scale = float(np.median(g) / mp)
        p = p * scale
    p = np.clip(p, MIN_DEPTH, cap)
    g = np.clip(g, MIN_DEPTH, cap)

    ratio = np.maximum(p / g, g / p)
    diff = p - g
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rms=float(np.sqrt(np.mean(diff**2))),
        rms_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(100.0 * np.mean(ratio < 1.25)),
        delta2=float(100.0 * np.mean(ratio < 1.25**2)),
        delta3=float(100.0 * np.mean(ratio < 1.25**3)),
        count=int(sel.sum()),
        scale=scale,
    )


def evaluate_both(pred, gt, mask=None, **kw) -> dict:
    """Metrics over the whole image and, when a mask is given, the non-reflective part."""
    out = {"all": evaluate(pred, gt, region="all", **kw).to_dict()}
    if mask is not None:
        out["non_reflective"] = evaluate(pred, gt, mask, region="non_reflective", **kw).to_dict()
    return out


def translation_error(pred, gt) -> float:
    """Distance between translations after the least-squares scale fit of ``pred`` onto ``gt``.

    Monocular reconstruction fixes translation only up to scale, so the
    predicted vector is first rescaled by ``<pred, gt> / |pred|^2``.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    nn = pred @ pred
    if not nn > 0:
        return float(np.linalg.norm(gt))
    return float(np.linalg.norm((pred @ gt / nn) * pred - gt))


def rotation_error_deg(pred_R, gt_R) -> float:
    """Geodesic angle between two rotations, in degrees."""
    c = (np.trace(np.asarray(pred_R).T @ np.asarray(gt_R)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))

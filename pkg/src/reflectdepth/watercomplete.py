"""Depth of the water region from the recovered mirror plane.

The water surface is the perpendicular bisector of the real and virtual
camera centers. Every water pixel's depth is where its viewing ray meets
that plane.
"""
from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

from .geometry import (CameraIntrinsics, Plane, RigidPose, invert, pixel_grid,
                       plane_from_pose_pair, ray_plane_depths)

log = logging.getLogger(__name__)


class Completion(NamedTuple):
    depth: np.ndarray
    plane: Plane
    holes: np.ndarray


def fill_water(depth, mask, real: RigidPose, virtual: RigidPose, K: CameraIntrinsics) -> Completion:
    """Like :func:`complete_depth`, also returning the plane and the hole mask."""
    depth = np.asarray(depth, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if mask.shape != depth.shape:
        raise ValueError("mask and depth differ in size")
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("mask must be binary")
    plane = plane_from_pose_pair(real, virtual)
    out = depth.copy()
    water = mask == 1
    holes = np.zeros_like(water)
    if water.any():
        pix = pixel_grid(*depth.shape)[water]
        d = ray_plane_depths(K, real, pix, plane)
        miss = np.isnan(d)
        out[water] = np.where(miss, 0.0, d)
        holes[water] = miss
        if miss.any():
            log.warning("%d water pixels miss the plane; left as holes (depth 0)", int(miss.sum()))
    return Completion(out, plane, holes)


def complete_depth(depth, mask, real: RigidPose, virtual: RigidPose, K: CameraIntrinsics) -> np.ndarray:
    """Replace depth on ``mask == 1`` pixels by the ray/plane hit depth.

    Poses are camera-to-world; real-region pixels are returned untouched.
    Rays that miss the plane leave a hole of depth 0.
    """
    return fill_water(depth, mask, real, virtual, K).depth


def poses_from_relative(rel: RigidPose) -> tuple[RigidPose, RigidPose]:
    """(real, virtual) camera poses in the real-camera frame, given real->virtual."""
    return RigidPose.identity(), invert(rel)

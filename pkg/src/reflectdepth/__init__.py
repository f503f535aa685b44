"""Depth and camera pose from a single photo with a water reflection.

The reflection is treated as a second view taken by the camera mirrored in
the water surface; depth and the real->virtual pose are fitted by minimizing
a photometric re-projection loss, and the water region is then filled from
the recovered mirror plane.
"""
__version__ = "0.1.0"

from .errors import ReflectDepthError
from .geometry import CameraIntrinsics, Plane, RigidPose
from .losses import LossConfig, WindowKernel
from .reprojection import ReflectionPair, reprojection_loss
from .solver import SolverConfig, solve
from .watercomplete import complete_depth

__all__ = ["CameraIntrinsics", "LossConfig", "Plane", "ReflectDepthError", "ReflectionPair",
           "RigidPose", "SolverConfig", "WindowKernel", "complete_depth", "reprojection_loss",
           "solve"]

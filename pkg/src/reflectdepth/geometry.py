"""Pinhole cameras, rigid poses and mirror-plane geometry.

Conventions
-----------
A :class:`RigidPose` maps points ``x -> R @ x + t``. Camera poses are
camera-to-world, so ``translation`` is the camera center. Camera frames are
x right, y down, z forward.

A mirror flips handedness. The virtual camera is stored with rotation
``H @ R @ F`` where ``H = I - 2 n n^T`` and ``F = diag(1, -1, 1)``, which keeps
every pose in SO(3). The price is that the reflection, as seen by this virtual
camera, is the real photo flipped about the principal row (``v -> 2 cy - v``);
see :func:`reflectdepth.reprojection.mirror_rows`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegeneratePosePair, InvalidDepth, NoIntersection, PointBehindCamera

MIN_CENTER_SEPARATION = 1e-6
PARALLEL_TOL = 1e-9
VIRTUAL_FLIP = np.diag([1.0, -1.0, 1.0])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def downsampled(self) -> "CameraIntrinsics":
        """Intrinsics after a 2x box reduction; coarse pixel i covers fine 2i, 2i+1."""
        return CameraIntrinsics(self.fx / 2, self.fy / 2, (self.cx - 0.5) / 2, (self.cy - 0.5) / 2)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


def hat(w) -> np.ndarray:
    wx, wy, wz = w
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    S = hat(w)
    if theta < 1e-8:
        return np.eye(3) + S + 0.5 * S @ S
    return np.eye(3) + np.sin(theta) / theta * S + (1 - np.cos(theta)) / theta**2 * S @ S


def so3_log(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    theta = np.arccos(cos_theta)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return 0.5 * v
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; read the axis off R + I
        M = 0.5 * (R + np.eye(3))
        k = int(np.argmax(np.diag(M)))
        axis = M[:, k] / np.sqrt(max(M[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if v @ axis < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * v


def so3_left_jacobian(w) -> np.ndarray:
    """J with exp(w + dw) ~= exp(J dw) exp(w)."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    S = hat(w)
    if theta < 1e-6:
        return np.eye(3) + 0.5 * S + S @ S / 6.0
    return (np.eye(3) + (1 - np.cos(theta)) / theta**2 * S
            + (theta - np.sin(theta)) / theta**3 * S @ S)


def orthonormalize(R) -> np.ndarray:
    """Nearest rotation matrix (SVD projection onto SO(3))."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class RigidPose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls()

    @classmethod
    def from_params(cls, params) -> "RigidPose":
        """From a 6-vector (axis-angle, translation)."""
        p = np.asarray(params, dtype=float)
        return cls(so3_exp(p[:3]), p[3:6])

    def params(self) -> np.ndarray:
        return np.concatenate([so3_log(self.rotation), self.translation])

    @property
    def center(self) -> np.ndarray:
        return self.translation

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        return np.asarray(points) @ self.rotation.T + self.translation

    def retract(self, delta) -> "RigidPose":
        """Left increment: rotation exp(dw) R re-orthonormalized, translation t + dt."""
        delta = np.asarray(delta, dtype=float)
        R = orthonormalize(so3_exp(delta[:3]) @ self.rotation)
        return RigidPose(R, self.translation + delta[3:6])

    def is_valid(self, tol: float = 1e-9) -> bool:
        R = self.rotation
        return (np.abs(R.T @ R - np.eye(3)).max() < tol
                and abs(np.linalg.det(R) - 1.0) < tol)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.ravel().tolist(),
                "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidPose":
        return cls(np.array(d["rotation"], dtype=float).reshape(3, 3),
                   np.array(d["translation"], dtype=float))


def compose(a: RigidPose, b: RigidPose) -> RigidPose:
    """The pose applying ``b`` first, then ``a``."""
    return RigidPose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(a: RigidPose) -> RigidPose:
    Rt = a.rotation.T
    return RigidPose(Rt, -Rt @ a.translation)


def relative_pose(src_cam: RigidPose, dst_cam: RigidPose) -> RigidPose:
    """Transform taking src-camera coordinates to dst-camera coordinates."""
    return compose(invert(dst_cam), src_cam)


@dataclass(frozen=True)
class Plane:
    """The set ``{x : normal . x = offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.array(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm == 0:
            raise ValueError("plane normal must be a finite nonzero vector")
        if abs(norm - 1.0) > 1e-12:  # leave unit normals bit-exact for serialization
            n = n / norm
        else:
            norm = 1.0
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def signed_distance(self, x) -> np.ndarray:
        return np.asarray(x) @ self.normal - self.offset

    def householder(self) -> np.ndarray:
        return np.eye(3) - 2.0 * np.outer(self.normal, self.normal)

    def reflect_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x - 2.0 * self.signed_distance(x)[..., None] * self.normal

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.offset)

    def transformed(self, pose: RigidPose) -> "Plane":
        """The plane expressed in the frame that ``pose`` maps into."""
        n = pose.rotation @ self.normal
        return Plane(n, self.offset + n @ pose.translation)

    def to_dict(self) -> dict:
        return {"normal": self.normal.tolist(), "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict) -> "Plane":
        return cls(np.array(d["normal"], dtype=float), float(d["offset"]))


def project(K: CameraIntrinsics, p) -> np.ndarray:
    """Pixel coordinates of camera-frame point(s) of shape (..., 3)."""
    p = np.asarray(p, dtype=float)
    z = p[..., 2]
    if np.any(~(z > 0)):
        raise PointBehindCamera("point has non-positive depth")
    return np.stack([K.fx * p[..., 0] / z + K.cx, K.fy * p[..., 1] / z + K.cy], axis=-1)


def backproject(K: CameraIntrinsics, u, depth) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if np.any(~(depth > 0)):
        raise InvalidDepth("depth must be positive")
    return np.stack([(u[..., 0] - K.cx) * depth / K.fx,
                     (u[..., 1] - K.cy) * depth / K.fy,
                     np.broadcast_to(depth, u.shape[:-1])], axis=-1)


def pixel_rays(K: CameraIntrinsics, u) -> np.ndarray:
    """Camera-frame ray directions with unit z for pixels (..., 2)."""
    u = np.asarray(u, dtype=float)
    return np.stack([(u[..., 0] - K.cx) / K.fx, (u[..., 1] - K.cy) / K.fy,
                     np.ones(u.shape[:-1])], axis=-1)


def pixel_grid(height: int, width: int) -> np.ndarray:
    """(H, W, 2) array of (x, y) pixel coordinates."""
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    return np.stack([xs, ys], axis=-1)


def reflect_pose_about_plane(pose: RigidPose, plane: Plane) -> RigidPose:
    H = plane.householder()
    center = H @ pose.translation + 2.0 * plane.offset * plane.normal
    return RigidPose(H @ pose.rotation @ VIRTUAL_FLIP, center)


def plane_from_pose_pair(real: RigidPose, virtual: RigidPose,
                         min_separation: float = MIN_CENTER_SEPARATION) -> Plane:
    """Perpendicular bisector of the two camera centers, normal toward ``real``."""
    d = real.center - virtual.center
    dist = np.linalg.norm(d)
    if not dist > min_separation:
        raise DegeneratePosePair(f"camera centers only {dist:.3g} m apart")
    n = d / dist
    return Plane(n, n @ (0.5 * (real.center + virtual.center)))


def ray_plane_depths(K: CameraIntrinsics, cam: RigidPose, pixels, plane: Plane,
                     tol: float = PARALLEL_TOL) -> np.ndarray:
    """Vectorized :func:`ray_plane_depth`; misses come back as NaN."""
    rays = pixel_rays(K, pixels) @ cam.rotation.T
    denom = rays @ plane.normal
    num = plane.offset - plane.normal @ cam.center
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / denom
    # camera-frame rays have unit z, so the ray parameter is the z-depth
    ok = (np.abs(denom) >= tol) & (t > 0)
    return np.where(ok, t, np.nan)


def ray_plane_depth(K: CameraIntrinsics, cam: RigidPose, pixel, plane: Plane,
                    tol: float = PARALLEL_TOL) -> float:
    d = float(ray_plane_depths(K, cam, np.asarray(pixel, dtype=float), plane, tol))
    if np.isnan(d):
        raise NoIntersection("ray misses the plane")
    return d


def save_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())

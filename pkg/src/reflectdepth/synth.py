"""Procedural reflective scenes with exact ground truth.

A scene is a set of textured, camera-facing rectangles ("billboards")
standing above a horizontal mirror plane, photographed by a pinhole camera.
The world frame is z-up; the water is ``z = 0``. Reflections are rendered from
the mirrored camera, flipped per the geometry convention, attenuated by a
constant factor and optionally displaced by a smooth ripple field.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import (CameraIntrinsics, Plane, RigidPose, load_json, pixel_grid, pixel_rays,
                       reflect_pose_about_plane, relative_pose, save_json)
from .imaging import LUMA, read_image, read_mask, read_pfm, write_image, write_pfm

TEXTURES = ("noise", "checker", "gradient")
WATER = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
SKY_DEPTH = 0.0


@dataclass(frozen=True)
class Billboard:
    """Rectangle in the plane ``y = center[1]``, facing the -y direction."""

    center: tuple[float, float, float]
    extent: tuple[float, float]
    texture: str = "noise"
    texture_seed: int = 0
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0)
    feature_size: float = 0.35
    octaves: int = 3

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ValueError(f"unknown texture {self.texture!r}")
        if min(self.extent) <= 0:
            raise ValueError("billboard extent must be positive")

    @property
    def bottom(self) -> float:
        return self.center[2] - 0.5 * self.extent[1]


def look_camera(height: float, pitch_deg: float = 0.0, yaw_deg: float = 0.0,
                roll_deg: float = 0.0, x: float = 0.0, y: float = 0.0) -> RigidPose:
    """Camera-to-world pose looking along +y; positive pitch tilts down."""
    base = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    p, yw, r = np.radians([pitch_deg, yaw_deg, roll_deg])
    # camera-frame rotations: pitch about x (down), yaw about y, roll about z
    Rx = np.array([[1, 0, 0], [0, np.cos(p), np.sin(p)], [0, -np.sin(p), np.cos(p)]])
    Ry = np.array([[np.cos(yw), 0, np.sin(yw)], [0, 1, 0], [-np.sin(yw), 0, np.cos(yw)]])
    Rz = np.array([[np.cos(r), -np.sin(r), 0], [np.sin(r), np.cos(r), 0], [0, 0, 1]])
    return RigidPose(base @ Ry @ Rx @ Rz, np.array([x, y, height]))


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    width: int = 64
    height: int = 64
    focal: float = 64.0
    camera: RigidPose = field(default_factory=lambda: look_camera(0.5, 6.0))
    plane: Plane = WATER
    billboards: tuple[Billboard, ...] = ()
    attenuation: float = 1.0
    ripple_max_drift: float = 0.0
    supersample: int = 4

    def __post_init__(self):
        if not 0 < self.attenuation <= 1:
            raise ValueError("attenuation must lie in (0, 1]")
        if self.ripple_max_drift < 0:
            raise ValueError("ripple_max_drift must be >= 0")
        if self.width < 8 or self.height < 8 or self.supersample < 1:
            raise ValueError("image too small")
        if not self.plane.signed_distance(self.camera.center) > 0:
            raise ValueError("camera must be strictly above the mirror plane")
        for b in self.billboards:
            if self.plane.signed_distance(np.array([b.center[0], b.center[1], b.bottom])) < 0:
                raise ValueError("billboards must not extend below the mirror plane")

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal, self.focal, (self.width - 1) / 2, (self.height - 1) / 2)


@dataclass
class Scene:
    spec: SceneSpec
    intrinsics: CameraIntrinsics
    composite: np.ndarray
    real_image: np.ndarray
    virtual_image: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    plane: Plane
    real_pose: RigidPose
    virtual_pose: RigidPose

    @property
    def relative_pose(self) -> RigidPose:
        """Real-camera coordinates to virtual-camera coordinates."""
        return relative_pose(self.real_pose, self.virtual_pose)

    @property
    def camera_plane_distance(self) -> float:
        return float(self.plane.signed_distance(self.real_pose.center))

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.real_pose.center - self.virtual_pose.center))

    @property
    def gray(self) -> np.ndarray:
        return self.composite @ LUMA

    def gt_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "real_pose": self.real_pose.to_dict(),
            "virtual_pose": self.virtual_pose.to_dict(),
            "relative_pose": self.relative_pose.to_dict(),
            "plane": self.plane.to_dict(),
            "attenuation": self.spec.attenuation,
            "ripple_max_drift": self.spec.ripple_max_drift,
            "seed": self.spec.seed,
            "size": [self.spec.width, self.spec.height],
        }


# --- textures ---------------------------------------------------------------

def _smoothstep(a):
    return a * a * (3 - 2 * a)


def value_noise(s, t, seed: int, spacing: float, octaves: int = 3,
                extent: float = 1.0) -> np.ndarray:
    """Multi-octave lattice noise in [0, 1] on ``[0, extent]^2`` (meters).

    The lattice depends only on ``seed``, ``spacing`` and ``extent``, never
    on the query points.
    """
    rng = np.random.default_rng(seed)
    out = np.zeros(np.shape(s))
    total = 0.0
    amp = 1.0
    for o in range(octaves):
        sp = spacing / 2**o
        gs, gt = np.asarray(s) / sp, np.asarray(t) / sp
        n = int(np.ceil(extent / sp)) + 3
        lattice = rng.random((n, n))
        i = np.clip(np.floor(gs).astype(int), 0, n - 2)
        j = np.clip(np.floor(gt).astype(int), 0, n - 2)
        a = _smoothstep(np.clip(gs - i, 0, 1))
        b = _smoothstep(np.clip(gt - j, 0, 1))
        v = ((1 - a) * (1 - b) * lattice[j, i] + a * (1 - b) * lattice[j, i + 1]
             + (1 - a) * b * lattice[j + 1, i] + a * b * lattice[j + 1, i + 1])
        out += amp * v
        total += amp
        amp *= 0.5
    return out / total


def texture_luminance(b: Billboard, s, t) -> np.ndarray:
    """Luminance of billboard ``b`` at local coordinates (meters from its corner)."""
    if b.texture == "noise":
        n = value_noise(s, t, b.texture_seed, b.feature_size, b.octaves, max(b.extent))
        lum = np.clip(0.5 + 1.6 * (n - 0.5), 0.0, 1.0)
    elif b.texture == "checker":
        k = (np.floor(s / b.feature_size) + np.floor(t / b.feature_size)) % 2
        lum = 0.3 + 0.4 * k
    else:
        lum = 0.2 + 0.6 * s / b.extent[0] + 0.1 * np.sin(t / b.feature_size)
    return 0.12 + 0.76 * np.clip(lum, 0.0, 1.0)


def _sky(dirs):
    return 0.75 + 0.15 * np.clip(dirs[..., 2] / np.linalg.norm(dirs, axis=-1), -1, 1)


def trace(origins, dirs, billboards) -> tuple[np.ndarray, np.ndarray]:
    """Nearest billboard hit per ray: (ray parameter or inf, RGB color)."""
    shape = dirs.shape[:-1]
    best = np.full(shape, np.inf)
    color = np.repeat(_sky(dirs)[..., None], 3, axis=-1)
    o = np.broadcast_to(origins, dirs.shape)
    for b in billboards:
        cx, cy, cz = b.center
        w, h = b.extent
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (cy - o[..., 1]) / dirs[..., 1]
        hx = o[..., 0] + t * dirs[..., 0]
        hz = o[..., 2] + t * dirs[..., 2]
        s = hx - (cx - w / 2)
        u = hz - (cz - h / 2)
        hit = (t > 1e-9) & (s >= 0) & (s <= w) & (u >= 0) & (u <= h) & (t < best)
        if not np.any(hit):
            continue
        lum = texture_luminance(b, np.clip(s[hit], 0, w), np.clip(u[hit], 0, h))
        best[hit] = t[hit]
        color[hit] = lum[:, None] * np.asarray(b.tint)[None, :]
    return best, color


# --- ripple -----------------------------------------------------------------

def ripple_field(spec: SceneSpec, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Smooth displacement (pixels) whose magnitude peaks at ``ripple_max_drift``."""
    if spec.ripple_max_drift == 0:
        return np.zeros_like(x), np.zeros_like(y)
    rng = np.random.default_rng([spec.seed, 7])
    size = max(spec.width, spec.height)
    comps = []
    for _ in range(3):
        ang = rng.uniform(0, 2 * np.pi)
        k = 2 * np.pi / (size * rng.uniform(0.3, 1.0))
        direction = rng.normal(size=2)
        direction /= np.linalg.norm(direction)
        comps.append((k * np.cos(ang), k * np.sin(ang), rng.uniform(0, 2 * np.pi), direction))

    def field_at(xx, yy):
        dx = np.zeros_like(xx)
        dy = np.zeros_like(yy)
        for kx, ky, ph, d in comps:
            s = np.sin(kx * xx + ky * yy + ph)
            dx += d[0] * s
            dy += d[1] * s
        return dx, dy

    gy, gx = np.mgrid[0:spec.height:0.25, 0:spec.width:0.25]
    fx, fy = field_at(gx, gy)
    peak = np.sqrt(fx**2 + fy**2).max()
    dx, dy = field_at(np.asarray(x, float), np.asarray(y, float))
    scale = spec.ripple_max_drift / peak
    return dx * scale, dy * scale


# --- rendering --------------------------------------------------------------

def _supersample_grid(spec: SceneSpec) -> np.ndarray:
    S = spec.supersample
    offs = (np.arange(S) + 0.5) / S - 0.5
    H, W = spec.height, spec.width
    ys = (np.arange(H)[:, None] + offs[None, :]).ravel()
    xs = (np.arange(W)[:, None] + offs[None, :]).ravel()
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1)


def _box(a, S):
    H, W = a.shape[0] // S, a.shape[1] // S
    return a.reshape(H, S, W, S, *a.shape[2:]).mean(axis=(1, 3))


def render_view(spec: SceneSpec, camera: RigidPose, pixels) -> tuple[np.ndarray, np.ndarray]:
    """Billboards only (no water) seen from ``camera`` at image coords ``pixels``."""
    K = spec.intrinsics
    dirs = pixel_rays(K, pixels) @ camera.rotation.T
    return trace(camera.center, dirs, spec.billboards)


def render(spec: SceneSpec) -> Scene:
    K = spec.intrinsics
    S = spec.supersample
    cam = spec.camera
    vcam = reflect_pose_about_plane(cam, spec.plane)
    n, d = spec.plane.normal, spec.plane.offset

    def water_t(dirs):
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (d - n @ cam.center) / denom
        return np.where((denom < 0) & (t > 0), t, np.inf)

    def reflection(pix):
        dx, dy = ripple_field(spec, pix[..., 0], pix[..., 1])
        vpix = np.stack([pix[..., 0] + dx, 2 * K.cy - (pix[..., 1] + dy)], axis=-1)
        _, col = render_view(spec, vcam, vpix)
        return spec.attenuation * col

    sub = _supersample_grid(spec)
    t_obj, col = render_view(spec, cam, sub)
    dirs = pixel_rays(K, sub) @ cam.rotation.T
    water_sub = water_t(dirs) < t_obj
    refl_sub = reflection(sub)
    comp_sub = np.where(water_sub[..., None], refl_sub, col)

    centers = pixel_grid(spec.height, spec.width)
    t_c, _ = render_view(spec, cam, centers)
    tw_c = water_t(pixel_rays(K, centers) @ cam.rotation.T)
    mask = (tw_c < t_c).astype(float)
    # camera-frame rays have unit z, so the hit parameter is the z-depth
    depth = np.where(mask == 1, tw_c, np.where(np.isfinite(t_c), t_c, SKY_DEPTH))

    virtual_img = _box(refl_sub, S)
    composite = np.where(mask[..., None] == 1, virtual_img, _box(comp_sub, S))
    real_img = composite * (1 - mask[..., None])
    return Scene(spec, K, composite, real_img, virtual_img, depth, mask, spec.plane, cam, vcam)


def random_billboards(rng: np.random.Generator, count: int = 3,
                      focal: float = 64.0) -> list[Billboard]:
    """Tower-like billboards 6-11 m away, standing on the water.

    They reach above the top of the default view, so vertical parallax never
    exposes a top edge; coarsest texture features span 10-14 px.
    """
    out = []
    for i in range(count):
        dist = rng.uniform(6.0, 11.0)
        w = rng.uniform(1.2, 2.6)
        h = 1.0 + 0.45 * dist
        x = rng.uniform(-0.28, 0.28) * dist
        tint = tuple(rng.uniform(0.75, 1.0, 3))
        out.append(Billboard((x, dist, h / 2), (w, h), "noise",
                             int(rng.integers(1 << 30)), tint, rng.uniform(10.0, 14.0) * dist / focal))
    return out


def default_scene_spec(seed: int = 0, attenuation: float = 1.0, drift: float = 0.0,
                       size: int = 64, **overrides) -> SceneSpec:
    """Back wall at 16 m plus three random billboards, camera 0.5 m above water."""
    rng = np.random.default_rng(seed)
    wall = Billboard((0.0, 16.0, 15.0), (80.0, 30.0), "noise", int(rng.integers(1 << 30)),
                     (0.9, 0.95, 1.0), 12.0 * 16.0 / size)
    boards = random_billboards(rng, 3, float(size))
    spec = SceneSpec(seed=seed, width=size, height=size, focal=float(size),
                     billboards=tuple([wall] + boards), attenuation=attenuation,
                     ripple_max_drift=drift)
    return replace(spec, **overrides) if overrides else spec


def random_scene_spec(seed: int, rho_range=(0.5, 0.8), drift_range=(0.0, 2.0),
                      size: int = 64) -> SceneSpec:
    """Default layout with attenuation and ripple drawn uniformly from the ranges."""
    rng = np.random.default_rng([seed, 11])
    rho = float(rng.uniform(*rho_range))
    drift = float(rng.uniform(*drift_range))
    return default_scene_spec(seed, attenuation=rho, drift=drift, size=size)


# --- scene directories -----------------------------------------------------

def save_scene(scene: Scene, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_image(scene.composite, out / "scene.png")
    write_image(scene.mask, out / "mask.png")
    write_pfm(out / "depth.pfm", scene.depth)
    save_json(scene.gt_dict(), out / "gt.json")


def load_scene_dir(path) -> dict:
    """Read the files written by :func:`save_scene` (missing files raise)."""
    p = Path(path)
    return {"image": read_image(p / "scene.png"), "mask": read_mask(p / "mask.png"),
            "depth": read_pfm(p / "depth.pfm") if (p / "depth.pfm").exists() else None,
            "gt": load_json(p / "gt.json")}

"""Raster helpers: bilinear sampling, grayscale, finite differences, PNG/PFM I/O.

Rasters are plain numpy arrays: ``(H, W)`` for grayscale, depth and masks,
``(H, W, 3)`` for RGB. Images live in [0, 1], depth in meters, masks in {0, 1}
with 1 marking the water (reflective) region.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from .errors import ImageFormatError

LUMA = np.array([0.299, 0.587, 0.114])
# coordinates this close outside the border (projection round-off) count as on it
BORDER_TOL = 1e-9


class Sample(NamedTuple):
    value: np.ndarray
    valid: np.ndarray


class SampleWithGrad(NamedTuple):
    value: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    valid: np.ndarray


def sample_cells(shape, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Top-left corner of the bilinear cell used for each sample point."""
    H, W = shape[:2]
    valid, x, y = _in_bounds(shape, x, y)
    # the last row/column is reached with weight 1 from the cell before it
    x0 = np.clip(np.floor(np.where(valid, x, 0.0)), 0, max(W - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(np.where(valid, y, 0.0)), 0, max(H - 2, 0)).astype(np.intp)
    return x0, y0


def _in_bounds(shape, x, y):
    H, W = shape[:2]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = BORDER_TOL
    valid = (x >= -t) & (x <= W - 1 + t) & (y >= -t) & (y <= H - 1 + t)
    return valid, np.clip(x, 0, W - 1), np.clip(y, 0, H - 1)


def _cell(img, x, y, cells=None):
    H, W = img.shape[:2]
    valid, xc, yc = _in_bounds(img.shape, x, y)
    if cells is None:  # pinned cells extrapolate, so only clamp when choosing our own
        x, y = xc, yc
    else:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
    x0, y0 = sample_cells(img.shape, x, y) if cells is None else cells
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    ax = np.where(valid, x - x0, 0.0)
    ay = np.where(valid, y - y0, 0.0)
    v00, v01 = img[y0, x0], img[y0, x1]
    v10, v11 = img[y1, x0], img[y1, x1]
    return valid, ax, ay, v00, v01, v10, v11


def bilinear_sample(img: np.ndarray, x, y) -> Sample:
    """Sample a single-channel image at sub-pixel ``(x, y)``.

    Coordinates whose 4-neighborhood leaves ``[0, W-1] x [0, H-1]`` come back
    with ``valid=False`` and value 0; no clamping is done.
    """
    valid, ax, ay, v00, v01, v10, v11 = _cell(img, x, y)
    top = v00 + ax * (v01 - v00)
    bot = v10 + ax * (v11 - v10)
    value = top + ay * (bot - top)
    return Sample(np.where(valid, value, 0.0), valid)


def bilinear_sample_grad(img: np.ndarray, x, y, cells=None) -> SampleWithGrad:
    """Bilinear sample plus its within-cell partial derivatives.

    ``cells`` (from :func:`sample_cells`) pins the interpolation cell, so the
    sample extends linearly past cell borders; used by gradient checks.
    """
    valid, ax, ay, v00, v01, v10, v11 = _cell(img, x, y, cells)
    top = v00 + ax * (v01 - v00)
    bot = v10 + ax * (v11 - v10)
    value = top + ay * (bot - top)
    dx = (1 - ay) * (v01 - v00) + ay * (v11 - v10)
    dy = bot - top
    zero = np.zeros_like(value)
    return SampleWithGrad(np.where(valid, value, zero), np.where(valid, dx, zero),
                          np.where(valid, dy, zero), valid)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {img.shape}")
    return img @ LUMA


def as_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    return to_grayscale(img) if img.ndim == 3 else img


def gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences; the last column of dx and last row of dy are 0."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("gradients expects a single-channel image")
    dx = np.zeros_like(img)
    dy = np.zeros_like(img)
    dx[:, :-1] = img[:, 1:] - img[:, :-1]
    dy[:-1, :] = img[1:, :] - img[:-1, :]
    return dx, dy


def downsample2(img: np.ndarray) -> np.ndarray:
    """2x box reduction; an odd trailing row/column is dropped."""
    img = np.asarray(img, dtype=float)
    H, W = img.shape[:2]
    img = img[: H - H % 2, : W - W % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


# --- file I/O ---------------------------------------------------------------

def write_pfm(path, field: np.ndarray) -> None:
    data = np.asarray(field, dtype="<f4")
    if data.ndim == 2:
        header = "Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = "PF"
    else:
        raise ImageFormatError(f"cannot store shape {data.shape} as PFM")
    H, W = data.shape[:2]
    with open(path, "wb") as f:
        f.write(f"{header}\n{W} {H}\n-1.0\n".encode("ascii"))
        # PFM stores rows bottom-to-top
        f.write(np.ascontiguousarray(data[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"(P[fF])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", raw)
    if m is None:
        raise ImageFormatError(f"{path}: malformed PFM header")
    kind, W, H, scale = m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))
    channels = 3 if kind == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = W * H * channels
    body = raw[m.end():]
    if len(body) < 4 * count:
        raise ImageFormatError(f"{path}: truncated PFM data")
    data = np.frombuffer(body, dtype=dtype, count=count)
    shape = (H, W, 3) if channels == 3 else (H, W)
    return data.reshape(shape)[::-1].astype(np.float32)


def write_png(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=float)
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if q.ndim == 3 and q.shape[2] != 3:
        raise ImageFormatError(f"cannot store shape {img.shape} as PNG")
    Image.fromarray(q).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "RGB"):
            arr = np.asarray(im)
        elif im.mode == "1":
            arr = np.asarray(im.convert("L"))
        elif im.mode == "RGBA":
            arr = np.asarray(im.convert("RGB"))
        else:
            raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode!r}")
    return arr.astype(float) / 255.0


def read_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        return read_pfm(path)
    if suffix == ".png":
        return read_png(path)
    raise ImageFormatError(f"{path}: unsupported format {suffix!r}")


def write_image(field: np.ndarray, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        write_pfm(path, field)
    elif suffix == ".png":
        write_png(path, field)
    else:
        raise ImageFormatError(f"{path}: unsupported format {suffix!r}")


def read_mask(path) -> np.ndarray:
    """Load a mask image as {0, 1}; anything at or above mid-gray counts as water."""
    return (as_gray(read_image(path)) >= 0.5).astype(float)

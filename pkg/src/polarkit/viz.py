"""False-color renderings of decoded planes, written as 8-bit PNG."""

from __future__ import annotations

import numpy as np
from PIL import Image

AOLP_HUE_SPAN = 300.0  # degrees of hue covered by AoLP 0..179 degrees


def to_uint8(x) -> np.ndarray:
    """Map [0, 1] to 0..255 with round-half-up; values outside are clipped."""
    return np.floor(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def hsv_to_rgb(h, s, v) -> np.ndarray:
    """Vectorized HSV -> RGB, hue in degrees; returns floats in [0, 1], shape ``(..., 3)``."""
    h = np.mod(np.asarray(h, dtype=np.float64), 360.0) / 60.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    c = v * s
    x = c * (1 - np.abs(np.mod(h, 2) - 1))
    m = v - c
    sector = np.floor(h).astype(np.int64) % 6
    zero = np.zeros_like(c)
    r = np.choose(sector, [c, x, zero, zero, x, c])
    g = np.choose(sector, [x, c, c, x, zero, zero])
    b = np.choose(sector, [zero, zero, x, c, c, x])
    return np.stack([r + m, g + m, b + m], axis=-1)


def aolp_rgb(aolp, valid=None) -> np.ndarray:
    """Cyclic hue map: red at 0 degrees through magenta at 179 degrees; invalid pixels black."""
    deg = np.degrees(np.asarray(aolp, dtype=np.float64))
    hue = deg * (AOLP_HUE_SPAN / 179.0)
    rgb = to_uint8(hsv_to_rgb(hue, 1.0, 1.0))
    if valid is not None:
        rgb[~np.asarray(valid, dtype=bool)] = 0
    return rgb


def dolp_rgb(dolp) -> np.ndarray:
    """Linear black (0) to yellow (1) ramp."""
    d = to_uint8(dolp)
    return np.stack([d, d, np.zeros_like(d)], axis=-1)


def gray(x) -> np.ndarray:
    return to_uint8(x)


def normals_rgb(normals, valid=None) -> np.ndarray:
    rgb = to_uint8((np.asarray(normals, dtype=np.float64) + 1.0) * 0.5)
    if valid is not None:
        rgb[~np.asarray(valid, dtype=bool)] = 0
    return rgb


def depth_gray(depth, d_max: float | None = None) -> np.ndarray:
    """Near = bright; empty (0) pixels black."""
    depth = np.asarray(depth, dtype=np.float64)
    filled = depth > 0
    top = d_max if d_max else (depth[filled].max() if filled.any() else 1.0)
    out = np.where(filled, 1.0 - np.clip(depth / top, 0.0, 1.0) * 0.9, 0.0)
    return to_uint8(out)


def save_png(path, array) -> None:
    # fixed compression settings keep the bytes reproducible
    Image.fromarray(np.ascontiguousarray(array)).save(path, format="PNG", optimize=False, compress_level=6)


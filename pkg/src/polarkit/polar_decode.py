"""Polarization mosaic decoding.

Raw quad-polarization mosaic -> four angle planes -> linear Stokes components
-> (intensity, AoLP, DoLP) with a validity mask -> network feature encoding
``(sin 2A, cos 2A, 2D - 1)``.

All functions are pure and keep the floating dtype of their inputs, so a
float32 decode stays float32 end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError

ANGLES = (0, 45, 90, 135)
# angles (degrees) at super-pixel offsets (0,0), (0,1), (1,0), (1,1)
DEFAULT_LAYOUT = (90, 45, 135, 0)
DEFAULT_VALIDITY_THRESHOLD = 0.01
_EPS = 1e-12


def validate_layout(layout) -> tuple[int, int, int, int]:
    layout = tuple(int(a) for a in layout)
    if len(layout) != 4 or sorted(layout) != sorted(ANGLES):
        raise DataError(f"layout must contain each of {ANGLES} exactly once, got {layout}")
    return layout


def layout_offsets(layout) -> dict[int, tuple[int, int]]:
    """Map each filter angle to its (row, col) offset inside the 2x2 super-pixel."""
    layout = validate_layout(layout)
    offsets = ((0, 0), (0, 1), (1, 0), (1, 1))
    return {angle: off for angle, off in zip(layout, offsets)}


def angle_map(height: int, width: int, layout=DEFAULT_LAYOUT) -> np.ndarray:
    """Full-resolution map of the filter angle (degrees) carried by each pixel."""
    layout = validate_layout(layout)
    cell = np.array(layout, dtype=np.int64).reshape(2, 2)
    return np.tile(cell, (height // 2, width // 2))


@dataclass(frozen=True)
class PolarRaw:
    data: np.ndarray
    bit_depth: int = 16
    layout: tuple[int, int, int, int] = DEFAULT_LAYOUT

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DimensionError(f"mosaic must be 2-D, got shape {data.shape}")
        if data.shape[0] % 2 or data.shape[1] % 2:
            raise DimensionError(f"mosaic dimensions must be even, got {data.shape[1]}x{data.shape[0]}")
        if self.bit_depth not in (8, 16):
            raise DataError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        if not np.issubdtype(data.dtype, np.integer):
            raise DataError(f"mosaic samples must be integers, got {data.dtype}")
        if data.size and (data.min() < 0 or data.max() >= 2**self.bit_depth):
            raise DataError(f"mosaic samples out of range for {self.bit_depth}-bit data")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "layout", validate_layout(self.layout))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def max_value(self) -> int:
        return 2**self.bit_depth - 1


@dataclass(frozen=True)
class PolarPlanes:
    p0: np.ndarray
    p45: np.ndarray
    p90: np.ndarray
    p135: np.ndarray

    def __post_init__(self):
        _check_same_shape(self.p0, self.p45, self.p90, self.p135)

    def by_angle(self, angle: int) -> np.ndarray:
        return {0: self.p0, 45: self.p45, 90: self.p90, 135: self.p135}[angle]


@dataclass(frozen=True)
class StokesImage:
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray


@dataclass(frozen=True)
class IadImage:
    intensity: np.ndarray
    aolp: np.ndarray  # radians, [0, pi)
    dolp: np.ndarray  # [0, 1]
    valid: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.intensity)


@dataclass(frozen=True)
class FeatureImage:
    f1: np.ndarray  # sin(2 AoLP)
    f2: np.ndarray  # cos(2 AoLP)
    f3: np.ndarray  # 2 DoLP - 1

    def stack(self) -> np.ndarray:
        """Channels-first ``(3, H, W)`` array."""
        return np.stack([self.f1, self.f2, self.f3])


def _check_same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"plane shapes differ: {sorted(shapes)}")


def _midpoints(samples: np.ndarray, axis: int, forward: bool) -> np.ndarray:
    # average of each sample and its neighbour along axis, edge replicated
    neighbour = np.empty_like(samples)
    n = samples.shape[axis]
    if n == 1:
        return samples.copy()
    src = [slice(None)] * samples.ndim
    dst = [slice(None)] * samples.ndim
    if forward:
        dst[axis], src[axis] = slice(0, n - 1), slice(1, n)
        edge = n - 1
    else:
        dst[axis], src[axis] = slice(1, n), slice(0, n - 1)
        edge = 0
    neighbour[tuple(dst)] = samples[tuple(src)]
    idx = [slice(None)] * samples.ndim
    idx[axis] = edge
    neighbour[tuple(idx)] = samples[tuple(idx)]
    neighbour += samples
    neighbour *= 0.5
    return neighbour


def _interpolate_lattice(samples: np.ndarray, oy: int, ox: int) -> np.ndarray:
    """Bilinear upsampling of a stride-2 sample lattice located at offset ``(oy, ox)``."""
    h, w = samples.shape
    out = np.empty((2 * h, 2 * w), dtype=samples.dtype)
    out[oy::2, ox::2] = samples
    horiz = _midpoints(samples, axis=1, forward=ox == 0)
    out[oy::2, 1 - ox :: 2] = horiz
    out[1 - oy :: 2, ox::2] = _midpoints(samples, axis=0, forward=oy == 0)
    out[1 - oy :: 2, 1 - ox :: 2] = _midpoints(horiz, axis=0, forward=oy == 0)
    return out


def demosaic(raw: PolarRaw, dtype=np.float32) -> PolarPlanes:
    """Split a quad-polarization mosaic into four full-resolution angle planes.

    Samples are normalized by ``2**bit_depth - 1``. Each plane equals the
    normalized raw sample at its native sites and is bilinearly interpolated
    from the nearest same-angle samples elsewhere, replicating edge samples.
    """
    if not isinstance(raw, PolarRaw):
        raw = PolarRaw(np.asarray(raw))
    scale = dtype(raw.max_value)
    planes = {}
    for angle, (oy, ox) in layout_offsets(raw.layout).items():
        samples = raw.data[oy::2, ox::2].astype(dtype)
        samples /= scale
        planes[angle] = _interpolate_lattice(samples, oy, ox)
    return PolarPlanes(planes[0], planes[45], planes[90], planes[135])


def compute_stokes(planes: PolarPlanes) -> StokesImage:
    p0, p45, p90, p135 = (np.asarray(p) for p in (planes.p0, planes.p45, planes.p90, planes.p135))
    _check_same_shape(p0, p45, p90, p135)
    s0 = (p0 + p45 + p90 + p135) * 0.5
    return StokesImage(s0=s0, s1=p0 - p90, s2=p45 - p135)


def compute_iad(stokes: StokesImage, validity_threshold: float = DEFAULT_VALIDITY_THRESHOLD) -> IadImage:
    """Intensity, angle and degree of linear polarization from Stokes components.

    AoLP uses the two-argument arctangent so the full ``[0, pi)`` range is
    recovered. DoLP is clamped to 1. A pixel is valid when its polarized
    fraction exceeds ``validity_threshold``; AoLP carries no information at
    invalid pixels.
    """
    s0, s1, s2 = (np.asarray(s) for s in (stokes.s0, stokes.s1, stokes.s2))
    _check_same_shape(s0, s1, s2)
    if validity_threshold < 0 or not np.isfinite(validity_threshold):
        raise DataError(f"validity_threshold must be finite and >= 0, got {validity_threshold}")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        polarized = np.sqrt(s1 * s1 + s2 * s2)
        lit = s0 > 0
        dolp = np.where(lit, polarized / np.where(lit, s0, 1), 0)
        np.minimum(dolp, 1, out=dolp)
        aolp = np.arctan2(s2, s1)
        aolp *= 0.5
        aolp = np.where(aolp < 0, aolp + np.pi, aolp)
        # -tiny + pi can round up to pi, which is the same orientation as 0
        aolp = np.where((aolp >= np.pi) | ~lit, 0, aolp).astype(aolp.dtype, copy=False)
        valid = lit & (polarized > validity_threshold * np.maximum(s0, _EPS))
    return IadImage(intensity=s0, aolp=aolp, dolp=dolp, valid=valid)


def encode_features(iad: IadImage) -> FeatureImage:
    # constant zeros at invalid pixels keep undefined AoLP out of the features
    two_a = 2 * np.asarray(iad.aolp)
    valid = np.asarray(iad.valid, dtype=bool)
    f1 = np.where(valid, np.sin(two_a), 0).astype(two_a.dtype, copy=False)
    f2 = np.where(valid, np.cos(two_a), 0).astype(two_a.dtype, copy=False)
    f3 = 2 * np.asarray(iad.dolp) - 1
    return FeatureImage(f1, f2, f3)


def decode(raw: PolarRaw, validity_threshold: float = DEFAULT_VALIDITY_THRESHOLD, dtype=np.float32):
    """Full decode: mosaic -> (IadImage, FeatureImage)."""
    iad = compute_iad(compute_stokes(demosaic(raw, dtype=dtype)), validity_threshold)
    return iad, encode_features(iad)

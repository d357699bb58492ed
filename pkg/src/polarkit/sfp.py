"""Shape from polarization.

Forward relations between a surface normal (azimuth ``alpha``, zenith
``theta``) and the polarization it produces, for specular and diffuse
reflection off a dielectric with refractive index ``n``, and their per-pixel
inversion into normal candidates.

Normals live in a viewer-facing camera frame: x to the image right, y to the
image top, z toward the camera. A normal is
``(sin(theta) cos(alpha), sin(theta) sin(alpha), cos(theta))``, so surfaces
facing the camera have ``z >= 0`` and azimuth is measured counter-clockwise
from the image x axis, the same reference the polarizer angles use.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError
from .polar_decode import IadImage

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi
DEFAULT_N = 1.5
DEFAULT_TOL = 1e-6
MAX_ITER = 200
# a requested DoLP this close above the computed specular peak is the peak
_PEAK_SLACK = 1e-9
_TIE = 1e-12


class ReflectionMode(str, enum.Enum):
    SPECULAR = "specular"
    DIFFUSE = "diffuse"


@dataclass(frozen=True)
class Material:
    n: float = DEFAULT_N

    def __post_init__(self):
        if not (math.isfinite(self.n) and self.n > 1):
            raise DomainError(f"refractive index must be finite and > 1, got {self.n}")


def _as_mode(mode) -> ReflectionMode:
    return mode if isinstance(mode, ReflectionMode) else ReflectionMode(str(mode).lower())


def _as_n(mat) -> float:
    return mat.n if isinstance(mat, Material) else Material(float(mat)).n


def wrap(angle, period):
    """Wrap into ``[0, period)``; guards the ``-tiny + period == period`` rounding case."""
    out = np.mod(angle, period)
    return np.where(out >= period, 0.0, out)


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


# forward model


def aolp_forward(alpha, mode):
    """AoLP produced by a surface with azimuth ``alpha``, wrapped to ``[0, pi)``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if _as_mode(mode) is ReflectionMode.SPECULAR:
        alpha = alpha - HALF_PI
    return _scalar_or_array(wrap(alpha, math.pi))


def _check_zenith(theta):
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all((theta >= 0) & (theta < HALF_PI)):
        raise DomainError("zenith must lie in [0, pi/2)")
    return theta


def _rho_specular(theta, n):
    s2 = np.sin(theta) ** 2
    root = np.sqrt(n * n - s2)
    num = 2.0 * s2 * np.cos(theta) * root
    den = n * n - s2 - n * n * s2 + 2.0 * s2 * s2
    return num / den


def _rho_diffuse(theta, n):
    s2 = np.sin(theta) ** 2
    num = (n - 1.0 / n) ** 2 * s2
    den = 2.0 + 2.0 * n * n - (n + 1.0 / n) ** 2 * s2 + 4.0 * np.cos(theta) * np.sqrt(n * n - s2)
    return num / den


def dolp_specular(theta, mat=DEFAULT_N):
    """DoLP of specular reflection at zenith ``theta``; equals 1 at the Brewster angle."""
    return _scalar_or_array(_rho_specular(_check_zenith(theta), _as_n(mat)))


def dolp_diffuse(theta, mat=DEFAULT_N):
    """DoLP of diffuse reflection at zenith ``theta``; strictly increasing in ``theta``."""
    return _scalar_or_array(_rho_diffuse(_check_zenith(theta), _as_n(mat)))


def dolp_forward(theta, mat, mode):
    if _as_mode(mode) is ReflectionMode.SPECULAR:
        return dolp_specular(theta, mat)
    return dolp_diffuse(theta, mat)


def diffuse_supremum(mat=DEFAULT_N) -> float:
    """Limit of the diffuse DoLP as the zenith approaches pi/2."""
    n = _as_n(mat)
    return (n - 1 / n) ** 2 / (2 + 2 * n * n - (n + 1 / n) ** 2)


@functools.lru_cache(maxsize=64)
def specular_peak(n: float, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """``(theta_max, rho_max)`` of the specular DoLP by golden-section search."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = 0.0, HALF_PI
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = _rho_specular(c, n), _rho_specular(d, n)
    for _ in range(MAX_ITER):
        if b - a <= tol:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _rho_specular(c, n)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _rho_specular(d, n)
    theta = 0.5 * (a + b)
    return theta, float(_rho_specular(theta, n))


# inversion


def _bisect(f, target, lo, hi, increasing: bool, tol: float):
    lo = np.array(lo, dtype=np.float64)
    hi = np.array(hi, dtype=np.float64)
    for _ in range(MAX_ITER):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        below = f(mid) < target
        go_right = below if increasing else ~below
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    return 0.5 * (lo + hi)


def zenith_candidates(rho, mat, mode, tol: float = DEFAULT_TOL):
    """Vectorized zenith inversion.

    Returns ``(roots, count)``: ``roots`` has a trailing axis of length 2,
    sorted ascending and NaN-padded; ``count`` holds 0, 1 or 2 per element.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if tol <= 0:
        raise DomainError(f"tol must be > 0, got {tol}")
    if np.any(~np.isfinite(rho) | (rho < 0) | (rho > 1)):
        raise DomainError("DoLP must lie in [0, 1]")
    n = _as_n(mat)
    mode = _as_mode(mode)
    roots = np.full(rho.shape + (2,), np.nan)
    zero = rho == 0

    if mode is ReflectionMode.DIFFUSE:
        ok = rho < diffuse_supremum(n)
        theta = _bisect(lambda t: _rho_diffuse(t, n), rho, np.zeros_like(rho), np.full_like(rho, HALF_PI), True, tol)
        roots[..., 0] = np.where(ok, np.where(zero, 0.0, theta), np.nan)
    else:
        t_peak, r_peak = specular_peak(n, tol)
        at_peak = (rho > r_peak) & (rho <= r_peak + _PEAK_SLACK)
        ok = rho <= r_peak
        f = lambda t: _rho_specular(t, n)
        left = _bisect(f, rho, np.zeros_like(rho), np.full_like(rho, t_peak), True, tol)
        right = _bisect(f, rho, np.full_like(rho, t_peak), np.full_like(rho, HALF_PI), False, tol)
        left = np.where(zero, 0.0, left)
        has_right = ok & ~zero
        merged = np.abs(right - left) < 2 * tol
        roots[..., 0] = np.where(ok, left, np.where(at_peak, t_peak, np.nan))
        roots[..., 1] = np.where(has_right & ~merged, right, np.nan)
    count = np.sum(np.isfinite(roots), axis=-1)
    return roots, count


def zenith_from_dolp(rho: float, mat, mode, tol: float = DEFAULT_TOL) -> list[float]:
    """All zenith angles in ``[0, pi/2)`` whose DoLP under ``mode`` equals ``rho``."""
    roots, _ = zenith_candidates(np.asarray([rho], dtype=np.float64), mat, mode, tol)
    return [float(r) for r in roots[0] if np.isfinite(r)]


def azimuth_candidates(phi, mode):
    """Vectorized azimuth inversion; trailing axis of length 2, ascending."""
    phi = np.asarray(phi, dtype=np.float64)
    if np.any(~np.isfinite(phi) | (phi < 0) | (phi >= math.pi)):
        raise DomainError("AoLP must lie in [0, pi)")
    base = phi + HALF_PI if _as_mode(mode) is ReflectionMode.SPECULAR else phi
    first = wrap(base, TWO_PI)
    second = wrap(base + math.pi, TWO_PI)
    return np.stack([np.minimum(first, second), np.maximum(first, second)], axis=-1)


def azimuth_from_aolp(phi: float, mode) -> list[float]:
    return [float(a) for a in azimuth_candidates(phi, mode)]


# candidate images


@dataclass(frozen=True)
class NormalCandidates:
    azimuths: tuple[float, float]
    zeniths: tuple[float, ...]
    mode: ReflectionMode

    def normals(self) -> list[np.ndarray]:
        return [normal_from_angles(t, a) for t in self.zeniths for a in self.azimuths]


@dataclass(frozen=True)
class CandidateImage:
    """Per-pixel normal candidates; NaN padding marks missing zenith roots."""

    azimuths: np.ndarray  # (H, W, 2)
    zeniths: np.ndarray  # (H, W, 2)
    valid: np.ndarray  # (H, W) pixels that had a usable measurement
    mode: ReflectionMode

    @property
    def shape(self) -> tuple[int, ...]:
        return self.valid.shape

    def at(self, row: int, col: int) -> NormalCandidates:
        z = self.zeniths[row, col]
        zeniths = tuple(float(t) for t in z[np.isfinite(z)]) if self.valid[row, col] else ()
        a = self.azimuths[row, col]
        return NormalCandidates((float(a[0]), float(a[1])), zeniths, self.mode)


@dataclass(frozen=True)
class NormalImage:
    normals: np.ndarray  # (H, W, 3)
    valid: np.ndarray  # (H, W)

    def __post_init__(self):
        normals = np.asarray(self.normals, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if normals.shape[:-1] != valid.shape or normals.shape[-1] != 3:
            raise DimensionError(f"normals {normals.shape} do not match validity {valid.shape}")
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.valid.shape


def normal_from_angles(theta, alpha) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([st * np.cos(alpha), st * np.sin(alpha), np.cos(theta)], axis=-1)


def angles_from_normal(normal) -> tuple[np.ndarray, np.ndarray]:
    """``(theta, alpha)`` of viewer-frame unit normals; ``alpha`` in ``[0, 2 pi)``."""
    normal = np.asarray(normal, dtype=np.float64)
    theta = np.arccos(np.clip(normal[..., 2], -1.0, 1.0))
    alpha = wrap(np.arctan2(normal[..., 1], normal[..., 0]), TWO_PI)
    return theta, alpha


def angular_error(a, b) -> np.ndarray:
    """Angle in radians between unit vectors along the last axis."""
    dot = np.sum(np.asarray(a) * np.asarray(b), axis=-1)
    return np.arccos(np.clip(dot, -1.0, 1.0))


def normals_from_polarization(iad: IadImage, mat, mode, tol: float = DEFAULT_TOL) -> CandidateImage:
    """Normal candidates at every valid pixel of ``iad``.

    Each valid pixel gets two azimuths (pi apart) and 0-2 zeniths. Pixels
    with no zenith solution, e.g. a diffuse DoLP above the diffuse
    supremum, keep ``valid`` but have no finite zenith.
    """
    mode = _as_mode(mode)
    valid = np.asarray(iad.valid, dtype=bool)
    aolp = np.where(valid, np.asarray(iad.aolp, dtype=np.float64), 0.0)
    dolp = np.where(valid, np.clip(np.asarray(iad.dolp, dtype=np.float64), 0.0, 1.0), 0.0)
    azimuths = azimuth_candidates(aolp, mode)
    zeniths, _ = zenith_candidates(dolp, mat, mode, tol)
    zeniths[~valid] = np.nan
    return CandidateImage(azimuths=azimuths, zeniths=zeniths, valid=valid, mode=mode)


def disambiguate_with_prior(candidates: CandidateImage, prior: NormalImage) -> NormalImage:
    """Pick per pixel the candidate normal closest to ``prior``.

    Candidates are ordered by zenith then azimuth, so exact ties resolve to
    the smaller zenith, then the smaller azimuth. Pixels without any
    candidate come out invalid.
    """
    if prior.shape != candidates.shape:
        raise DimensionError(f"prior {prior.shape} does not match candidates {candidates.shape}")
    theta = np.repeat(candidates.zeniths, 2, axis=-1)  # (H, W, 4): t0 a0, t0 a1, t1 a0, t1 a1
    alpha = np.tile(candidates.azimuths, 2)
    normals = normal_from_angles(np.nan_to_num(theta), alpha)
    dots = np.einsum("...kc,...c->...k", normals, prior.normals)
    dots = np.where(np.isfinite(theta), dots, -np.inf)
    best = dots.max(axis=-1, keepdims=True)
    choice = np.argmax(dots >= best - _TIE, axis=-1)
    picked = np.take_along_axis(normals, choice[..., None, None], axis=-2)[..., 0, :]
    valid = candidates.valid & prior.valid & np.isfinite(best[..., 0])
    picked = np.where(valid[..., None], picked, 0.0)
    return NormalImage(picked, valid)

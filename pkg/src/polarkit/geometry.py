"""Camera/lidar geometry.

Camera frame follows the usual computer-vision convention: x right, y down,
z forward, pixel centers at integer coordinates. Images are assumed
rectified; there is no distortion model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DegenerateInputError, DimensionError, DomainError, NotFoundError

ORTHO_TOL = 1e-9
MIN_NORMAL_SPAN = 1e-3


@dataclass(frozen=True)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, points_cam) -> tuple[np.ndarray, np.ndarray]:
        """Continuous pixel coordinates ``(u, v)`` of camera-frame points."""
        p = np.asarray(points_cam, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * p[..., 0] / p[..., 2] + self.cx
            v = self.fy * p[..., 1] / p[..., 2] + self.cy
        return u, v

    def rays(self) -> np.ndarray:
        """Per-pixel ray directions with unit z, shape ``(H, W, 3)``."""
        u, v = np.meshgrid(np.arange(self.width, dtype=np.float64), np.arange(self.height, dtype=np.float64))
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)

    def backproject(self, u, v, depth) -> np.ndarray:
        u, v, depth = (np.asarray(a, dtype=np.float64) for a in (u, v, depth))
        return np.stack([(u - self.cx) / self.fx * depth, (v - self.cy) / self.fy * depth, depth], axis=-1)


def _check_rotation(R: np.ndarray):
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise DomainError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
        raise DomainError("rotation must be orthonormal with determinant +1")


@dataclass(frozen=True)
class RigidTransform:
    """``x_out = rotation @ x_in + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        _check_rotation(R)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise DomainError("translation must be a finite 3-vector")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_matrix(cls, T) -> RigidTransform:
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def apply_to_plane(self, plane: Plane) -> Plane:
        normal = self.rotation @ plane.normal
        return Plane(normal, plane.offset + normal @ self.translation)

    def inverse(self) -> RigidTransform:
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: RigidTransform) -> RigidTransform:
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    __matmul__ = compose


def rotation_angle(R_a, R_b) -> float:
    """Geodesic angle in radians between two rotations."""
    R = np.asarray(R_a).T @ np.asarray(R_b)
    # the arccos form loses precision near 0, so use the skew part as well
    skew = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(math.atan2(0.5 * np.linalg.norm(skew), 0.5 * (np.trace(R) - 1.0)))


@dataclass(frozen=True)
class Plane:
    """``{x : normal . x = offset}`` with unit normal and ``offset >= 0``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.array(self.normal, dtype=np.float64).reshape(-1)
        offset = float(self.offset)
        if normal.shape != (3,) or not np.all(np.isfinite(normal)) or not math.isfinite(offset):
            raise DomainError("plane needs a finite 3-vector normal and finite offset")
        norm = np.linalg.norm(normal)
        if norm == 0:
            raise DegenerateInputError("plane normal must be nonzero")
        normal, offset = normal / norm, offset / norm
        if offset < 0:
            normal, offset = -normal, -offset
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", offset)

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    intensity: np.ndarray | None = None
    timestamp: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise DomainError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.asarray(self.intensity, dtype=np.float64).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise DimensionError("intensity length must match point count")
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, transform: RigidTransform) -> PointCloud:
        return PointCloud(transform.apply(self.points), self.intensity, self.timestamp)


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else PointCloud(cloud).points


def fit_plane_lsq(points) -> Plane:
    """Total-least-squares plane through ``points``."""
    pts = _points(points)
    if pts.shape[0] < 3:
        raise DegenerateInputError(f"need at least 3 points, got {pts.shape[0]}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    eigval, eigvec = np.linalg.eigh(centered.T @ centered)
    scale = max(eigval[2], np.finfo(float).tiny)
    if eigval[1] <= 1e-12 * scale or eigval[2] <= 0:
        raise DegenerateInputError("points are collinear or coincident")
    normal = eigvec[:, 0]
    return Plane(normal, normal @ centroid)


def _plane_through(p0, p1, p2):
    normal = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(normal)
    scale = np.linalg.norm(p1 - p0) * np.linalg.norm(p2 - p0)
    if norm <= 1e-12 * max(scale, np.finfo(float).tiny):
        return None
    normal = normal / norm
    return normal, normal @ p0


def ransac_plane(points, inlier_threshold: float, iterations: int = 1000, seed: int = 0) -> tuple[Plane, np.ndarray]:
    """Robust plane fit.

    Samples minimal triples (all of them when there are no more than
    ``iterations``), keeps the hypothesis with the most points within
    ``inlier_threshold`` and refits it with :func:`fit_plane_lsq`.
    Deterministic for a given ``seed``.
    """
    pts = _points(points)
    n = pts.shape[0]
    if n < 3:
        raise DegenerateInputError(f"need at least 3 points, got {n}")
    if not inlier_threshold > 0:
        raise DomainError("inlier_threshold must be positive")
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    if math.comb(n, 3) <= iterations:
        triples = np.array(list(combinations(range(n), 3)))
    else:
        rng = np.random.default_rng(seed)
        triples = np.array([rng.choice(n, 3, replace=False) for _ in range(iterations)])

    best = None
    best_count = 0
    for i, j, k in triples:
        hyp = _plane_through(pts[i], pts[j], pts[k])
        if hyp is None:
            continue
        normal, d = hyp
        inliers = np.abs(pts @ normal - d) <= inlier_threshold
        count = int(inliers.sum())
        if count > best_count:
            best, best_count = inliers, count
    if best is None or best_count < 3:
        raise NotFoundError("no plane consensus of at least 3 points")
    consensus = np.flatnonzero(best)
    try:
        plane = fit_plane_lsq(pts[consensus])
    except DegenerateInputError as exc:
        raise NotFoundError("consensus set is degenerate") from exc
    refit = np.flatnonzero(np.abs(plane.signed_distance(pts)) <= inlier_threshold)
    return plane, refit if refit.size >= consensus.size else consensus


def calibrate_extrinsic_from_planes(pairs) -> RigidTransform:
    """Lidar-to-camera transform from corresponding planes.

    ``pairs`` is a sequence of ``(plane_lidar, plane_camera)`` describing the
    same physical planes with consistently oriented normals. The rotation
    aligns the normals in the least-squares sense (SVD with determinant
    correction); the translation then solves
    ``n_cam . t = d_cam - d_lidar`` by linear least squares.
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise DegenerateInputError(f"need at least 3 plane pairs, got {len(pairs)}")
    n_l = np.array([p[0].normal for p in pairs])
    n_c = np.array([p[1].normal for p in pairs])
    d_l = np.array([p[0].offset for p in pairs])
    d_c = np.array([p[1].offset for p in pairs])
    for normals in (n_l, n_c):
        if np.linalg.svd(normals, compute_uv=False)[-1] <= MIN_NORMAL_SPAN:
            raise DegenerateInputError("plane normals do not span 3-D space")
    U, _, Vt = np.linalg.svd(n_c.T @ n_l)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    R = U @ D @ Vt
    t, *_ = np.linalg.lstsq(n_c, d_c - d_l, rcond=None)
    return RigidTransform(R, t)


def project_points(cloud, extrinsic: RigidTransform, cam: PinholeCamera) -> np.ndarray:
    """Sparse depth image (meters, 0 = empty) of a lidar cloud, nearest point per pixel."""
    pts = extrinsic.apply(_points(cloud))
    depth = np.zeros((cam.height, cam.width))
    if pts.shape[0] == 0:
        return depth
    z = pts[:, 2]
    front = z > 0
    u, v = cam.project(pts[front])
    z = z[front]
    col = np.floor(u + 0.5)
    row = np.floor(v + 0.5)
    inside = (col >= 0) & (col < cam.width) & (row >= 0) & (row < cam.height)
    flat = (row[inside] * cam.width + col[inside]).astype(np.int64)
    z = z[inside]
    order = np.lexsort((z, flat))
    flat, z = flat[order], z[order]
    first = np.ones(flat.shape, dtype=bool)
    first[1:] = flat[1:] != flat[:-1]
    depth.reshape(-1)[flat[first]] = z[first]
    return depth


def backproject_depth(depth, cam: PinholeCamera) -> np.ndarray:
    """Camera-frame points of every nonzero depth pixel, shape ``(N, 3)``."""
    depth = np.asarray(depth, dtype=np.float64)
    row, col = np.nonzero(depth > 0)
    return cam.backproject(col, row, depth[row, col])


# bird's-eye view


@dataclass(frozen=True)
class BevGridSpec:
    cell_size: float = 0.05
    x_range: tuple[float, float] = (-10.0, 10.0)
    z_range: tuple[float, float] = (0.0, 40.0)

    def __post_init__(self):
        if not self.cell_size > 0:
            raise DomainError("cell_size must be positive")
        if not (self.x_range[1] > self.x_range[0] and self.z_range[1] > self.z_range[0]):
            raise DomainError("grid ranges must be increasing")

    @property
    def shape(self) -> tuple[int, int]:
        """``(n_z, n_x)``."""
        nx = math.ceil((self.x_range[1] - self.x_range[0]) / self.cell_size - 1e-9)
        nz = math.ceil((self.z_range[1] - self.z_range[0]) / self.cell_size - 1e-9)
        return nz, nx

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates ``(x, z)``, each shaped ``(n_z, n_x)``; row 0 is nearest."""
        nz, nx = self.shape
        x = self.x_range[0] + (np.arange(nx) + 0.5) * self.cell_size
        z = self.z_range[0] + (np.arange(nz) + 0.5) * self.cell_size
        return np.meshgrid(x, z)


@dataclass(frozen=True)
class BevGrid:
    spec: BevGridSpec
    values: np.ndarray
    counts: np.ndarray

    @property
    def observed(self) -> np.ndarray:
        return self.counts > 0


def bilinear_sample(image, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``image`` at continuous pixel coordinates; returns ``(values, inside)``.

    A location is inside when ``0 <= u <= W-1`` and ``0 <= v <= H-1``;
    outside locations get value 0.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    inside = np.isfinite(u) & np.isfinite(v) & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uu = np.where(inside, u, 0.0)
    vv = np.where(inside, v, 0.0)
    x0 = np.minimum(np.floor(uu).astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(np.floor(vv).astype(np.int64), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = uu - x0
    ay = vv - y0
    top = image[y0, x0] * (1 - ax) + image[y0, x1] * ax
    bottom = image[y1, x0] * (1 - ax) + image[y1, x1] * ax
    out = top * (1 - ay) + bottom * ay
    return np.where(inside, out, 0.0), inside


def ground_points(ground: Plane, spec: BevGridSpec) -> np.ndarray:
    """Camera-frame 3-D points of the BEV cell centers lying on ``ground``."""
    ny = ground.normal[1]
    if abs(ny) < 1e-9:
        raise DomainError("ground plane is parallel to the camera y axis")
    x, z = spec.centers()
    y = (ground.offset - ground.normal[0] * x - ground.normal[2] * z) / ny
    return np.stack([x, y, z], axis=-1)


def bev_project(confidence, cam: PinholeCamera, ground: Plane, spec: BevGridSpec | None = None) -> BevGrid:
    """Resample an image-space map onto a ground-plane grid.

    Every ground cell center is projected into the image and the map is
    bilinearly sampled there. Cells behind the camera or projecting outside
    the image get count 0.
    """
    spec = spec or BevGridSpec()
    confidence = np.asarray(confidence, dtype=np.float64)
    if confidence.shape != (cam.height, cam.width):
        raise DimensionError(f"map shape {confidence.shape} does not match camera {cam.height}x{cam.width}")
    pts = ground_points(ground, spec)
    front = pts[..., 2] > 0
    u, v = cam.project(pts)
    values, inside = bilinear_sample(confidence, np.where(front, u, np.nan), np.where(front, v, np.nan))
    counts = (inside & front).astype(np.int64)
    return BevGrid(spec, np.where(counts > 0, values, 0.0), counts)


def ground_plane_from_height(camera_height: float) -> Plane:
    """Flat ground ``y = camera_height`` in the camera frame."""
    if not camera_height > 0:
        raise DomainError("camera height must be positive")
    return Plane(np.array([0.0, 1.0, 0.0]), camera_height)


def ground_plane_from_cloud(points_cam, fraction: float = 0.2, inlier_threshold: float = 0.05,
                            iterations: int = 500, seed: int = 0) -> Plane:
    """Ground plane from the lowest ``fraction`` of camera-frame points (largest y)."""
    pts = _points(points_cam)
    if not 0 < fraction <= 1:
        raise DomainError("fraction must lie in (0, 1]")
    if pts.shape[0] < 3:
        raise DegenerateInputError("need at least 3 points for a ground plane")
    cut = np.quantile(pts[:, 1], 1 - fraction)
    lowest = pts[pts[:, 1] >= cut]
    plane, _ = ransac_plane(lowest, inlier_threshold, iterations, seed)
    return plane

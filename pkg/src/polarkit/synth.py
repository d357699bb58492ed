"""Synthetic polarimetric renderer used as ground truth.

Scenes are a ground plane plus axis-aligned boxes in a world frame with y
pointing down (so a level camera frame and the world agree). Each pixel ray
is intersected with every surface; the nearest hit provides depth, the
analytic normal, and a polarization state from the forward reflection models
in :mod:`polarkit.sfp`.

Polarization angles use the optical axis as the viewing direction: the
zenith of a surface is the angle between its normal and the camera z axis,
the same convention the inversion uses to assemble normals.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError, ParseError
from .geometry import PinholeCamera, Plane, RigidTransform
from .polar_decode import (DEFAULT_LAYOUT, DEFAULT_VALIDITY_THRESHOLD, IadImage, PolarPlanes, PolarRaw, angle_map,
                           validate_layout)
from .sfp import Material, NormalImage, ReflectionMode, _rho_diffuse, _rho_specular, aolp_forward, angles_from_normal

LIGHT_DIRECTION = np.array([0.0, -1.0, 0.0])  # toward the sun, world frame (y down)
MISS = -1
GROUND = 0


def polarizer_response(intensity, aolp, dolp, filter_angle):
    """Intensity transmitted by an ideal linear polarizer at ``filter_angle``."""
    intensity = np.asarray(intensity, dtype=np.float64)
    return 0.5 * intensity * (1.0 + np.asarray(dolp) * np.cos(2.0 * (np.asarray(filter_angle) - np.asarray(aolp))))


def polarizer_planes(intensity, aolp, dolp):
    """Responses behind the 0, 45, 90 and 135 degree filters."""
    return PolarPlanes(*(polarizer_response(intensity, aolp, dolp, math.radians(a)) for a in (0, 45, 90, 135)))


@dataclass(frozen=True)
class Surface:
    material: Material = field(default_factory=Material)
    mode: ReflectionMode = ReflectionMode.DIFFUSE
    albedo: float = 0.5

    def __post_init__(self):
        if not 0 < self.albedo <= 1:
            raise DomainError(f"albedo must lie in (0, 1], got {self.albedo}")
        object.__setattr__(self, "mode", ReflectionMode(self.mode))


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    surface: Surface = field(default_factory=Surface)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or not all(a < b for a, b in zip(lo, hi)):
            raise DomainError(f"box corners must satisfy lo < hi per axis, got {lo}, {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def corners(self) -> np.ndarray:
        return np.array([[x, y, z] for x in (self.lo[0], self.hi[0]) for y in (self.lo[1], self.hi[1])
                         for z in (self.lo[2], self.hi[2])])


@dataclass(frozen=True)
class SceneSpec:
    camera: PinholeCamera
    pose: RigidTransform  # camera-to-world
    ground: Plane
    ground_surface: Surface = field(default_factory=Surface)
    boxes: tuple[Box, ...] = ()
    noise_sigma: float = 0.0
    seed: int = 0
    ambient: float = 0.0  # fraction of albedo lit regardless of orientation
    bit_depth: int = 16
    layout: tuple[int, int, int, int] = DEFAULT_LAYOUT

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise DomainError("noise_sigma must be >= 0")
        if not 0 <= self.ambient <= 1:
            raise DomainError("ambient must lie in [0, 1]")
        if self.bit_depth not in (8, 16):
            raise DomainError("bit_depth must be 8 or 16")
        if self.camera.width % 2 or self.camera.height % 2:
            raise DomainError("image dimensions must be even for mosaic rendering")
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "layout", validate_layout(self.layout))
        eye_side = np.sign(self.ground.signed_distance(self.pose.translation))
        for box in self.boxes:
            side = np.sign(self.ground.signed_distance(box.corners()))
            if np.any(side * eye_side < 0):
                raise DomainError("boxes must lie above the ground, on the camera side")

    def surfaces(self) -> list[Surface]:
        return [self.ground_surface] + [b.surface for b in self.boxes]


def look_at(eye, target, down=(0.0, 1.0, 0.0)) -> RigidTransform:
    """Camera-to-world pose of a camera at ``eye`` looking at ``target``.

    ``down`` is the world direction the image rows should follow; when it is
    parallel to the viewing direction, world +z is used instead.
    """
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(np.asarray(down, dtype=np.float64), z)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(np.array([0.0, 0.0, 1.0]), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


@dataclass(frozen=True)
class RenderResult:
    depth: np.ndarray  # camera-frame z of the hit, 0 on miss
    normals: NormalImage  # viewer frame, see polarkit.sfp
    iad: IadImage
    surface_id: np.ndarray  # -1 miss, 0 ground, k + 1 for box k


def _intersect(scene: SceneSpec):
    cam, pose = scene.camera, scene.pose
    rays_cam = cam.rays()
    d = rays_cam @ pose.rotation.T
    o = pose.translation
    h, w = cam.height, cam.width
    best = np.full((h, w), np.inf)
    sid = np.full((h, w), MISS, dtype=np.int64)
    normal = np.zeros((h, w, 3))

    with np.errstate(divide="ignore", invalid="ignore"):
        g = scene.ground
        denom = d @ g.normal
        s = (g.offset - o @ g.normal) / denom
        hit = np.isfinite(s) & (s > 0)
        best = np.where(hit, s, best)
        sid[hit] = GROUND
        normal[hit] = g.normal

        inv = 1.0 / d
        for k, box in enumerate(scene.boxes):
            t1 = (np.asarray(box.lo) - o) * inv
            t2 = (np.asarray(box.hi) - o) * inv
            tmin = np.fmin(t1, t2)
            tnear = tmin.max(axis=-1)
            tfar = np.fmax(t1, t2).min(axis=-1)
            hit = (tnear <= tfar) & (tnear > 0) & (tnear < best)
            if not np.any(hit):
                continue
            axis = np.argmax(tmin, axis=-1)
            face = np.zeros((h, w, 3))
            np.put_along_axis(face, axis[..., None], -np.sign(np.take_along_axis(d, axis[..., None], -1)), -1)
            best = np.where(hit, tnear, best)
            sid[hit] = k + 1
            normal[hit] = face[hit]

    # orient every normal toward the camera
    flip = np.sum(normal * d, axis=-1) > 0
    normal[flip] *= -1
    return np.where(sid != MISS, best, 0.0), sid, normal


def render_scene(scene: SceneSpec, validity_threshold: float = DEFAULT_VALIDITY_THRESHOLD) -> RenderResult:
    """Ray-cast ground-truth depth, normals and noiseless (I, AoLP, DoLP)."""
    depth, sid, n_world = _intersect(scene)
    hit = sid != MISS
    n_cam = n_world @ scene.pose.rotation
    n_view = n_cam * np.array([1.0, -1.0, -1.0])
    facing = hit & (n_view[..., 2] > 0)

    surfaces = scene.surfaces()
    lookup = np.clip(sid, 0, None)
    ior = np.array([s.material.n for s in surfaces])[lookup]
    specular = np.array([s.mode is ReflectionMode.SPECULAR for s in surfaces])[lookup]
    albedo = np.array([s.albedo for s in surfaces])[lookup]

    theta, alpha = angles_from_normal(n_view)
    theta = np.where(facing, theta, 0.0)
    dolp = np.where(specular, _rho_specular(theta, ior), _rho_diffuse(theta, ior))
    aolp = np.where(specular, aolp_forward(alpha, ReflectionMode.SPECULAR), aolp_forward(alpha, ReflectionMode.DIFFUSE))
    lambert = np.maximum(0.0, n_world @ LIGHT_DIRECTION)
    intensity = albedo * (scene.ambient + (1.0 - scene.ambient) * lambert)

    intensity = np.where(facing, intensity, 0.0)
    dolp = np.where(facing, dolp, 0.0)
    aolp = np.where(facing & (dolp > 0), aolp, 0.0)
    iad_valid = facing & (intensity > 0) & (dolp > validity_threshold)
    normals = NormalImage(np.where(facing[..., None], n_view, 0.0), facing)
    return RenderResult(depth, normals, IadImage(intensity, aolp, dolp, iad_valid), sid)


def quantize(values, bit_depth: int) -> np.ndarray:
    """Round-half-up normalized values onto the integer sample grid."""
    top = 2**bit_depth - 1
    scaled = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * top
    return np.floor(scaled + 0.5).astype(np.uint16 if bit_depth > 8 else np.uint8)


def mosaic_from_iad(iad: IadImage, bit_depth: int = 16, layout=DEFAULT_LAYOUT, noise_sigma: float = 0.0,
                    seed: int = 0) -> PolarRaw:
    """Sample the polarizer response of each pixel at its mosaic angle."""
    h, w = np.shape(iad.intensity)
    angles = np.radians(angle_map(h, w, layout))
    values = polarizer_response(iad.intensity, iad.aolp, iad.dolp, angles)
    if noise_sigma > 0:
        # Philox is counter based: the value at each pixel depends only on seed and position
        rng = np.random.Generator(np.random.Philox(key=seed))
        values = values + noise_sigma * rng.standard_normal((h, w))
    return PolarRaw(quantize(values, bit_depth), bit_depth, layout)


def render_mosaic(scene: SceneSpec) -> PolarRaw:
    iad = render_scene(scene).iad
    return mosaic_from_iad(iad, scene.bit_depth, scene.layout, scene.noise_sigma, scene.seed)


# scene files


def _floats(text: str, count: int, where: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None
    if len(vals) != count:
        raise ParseError(f"{where}: expected {count} numbers, got {len(vals)}")
    return vals


def _surface(section, where: str) -> Surface:
    try:
        return Surface(Material(section.getfloat("n", 1.5)), ReflectionMode(section.get("mode", "diffuse").strip().lower()),
                       section.getfloat("albedo", 0.5))
    except ValueError as exc:
        raise ParseError(f"[{where}]: {exc}") from None


def parse_scene(text: str) -> SceneSpec:
    """Build a :class:`SceneSpec` from INI-style ``key = value`` sections.

    Sections: ``[camera]`` (fx, fy, cx, cy, width, height and either
    position/look_at[/down] or rotation/translation), ``[ground]``
    (normal, offset, n, mode, albedo), any number of ``[box NAME]``
    (min, max, n, mode, albedo) and an optional ``[render]``
    (noise_sigma, seed, ambient, bit_depth, layout).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from None
    for required in ("camera", "ground"):
        if required not in cp:
            raise ParseError(f"missing [{required}] section")
    try:
        c = cp["camera"]
        camera = PinholeCamera(c.getfloat("fx"), c.getfloat("fy"), c.getfloat("cx"), c.getfloat("cy"),
                               c.getint("width"), c.getint("height"))
        if "look_at" in c:
            pose = look_at(_floats(c["position"], 3, "camera.position"), _floats(c["look_at"], 3, "camera.look_at"),
                           _floats(c.get("down", "0 1 0"), 3, "camera.down"))
        else:
            pose = RigidTransform(np.array(_floats(c["rotation"], 9, "camera.rotation")).reshape(3, 3),
                                  _floats(c["translation"], 3, "camera.translation"))
        g = cp["ground"]
        ground = Plane(_floats(g.get("normal", "0 1 0"), 3, "ground.normal"), g.getfloat("offset"))
        boxes = []
        for name in cp.sections():
            if name.startswith("box"):
                b = cp[name]
                boxes.append(Box(_floats(b["min"], 3, f"{name}.min"), _floats(b["max"], 3, f"{name}.max"),
                                 _surface(b, name)))
        r = cp["render"] if "render" in cp else {}
        layout = _floats(r.get("layout", ",".join(map(str, DEFAULT_LAYOUT))), 4, "render.layout")
        return SceneSpec(
            camera=camera, pose=pose, ground=ground, ground_surface=_surface(g, "ground"), boxes=tuple(boxes),
            noise_sigma=float(r.get("noise_sigma", 0.0)), seed=int(r.get("seed", 0)),
            ambient=float(r.get("ambient", 0.0)), bit_depth=int(r.get("bit_depth", 16)),
            layout=tuple(int(a) for a in layout),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing or malformed key: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise ParseError(str(exc)) from None


def load_scene(path) -> SceneSpec:
    return parse_scene(Path(path).read_text(encoding="utf-8"))


def with_seed(scene: SceneSpec, seed: int) -> SceneSpec:
    return replace(scene, seed=int(seed))

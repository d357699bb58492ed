from __future__ import annotations

import math

import numpy as np
import pytest

from polarkit import sfp, synth
from polarkit.errors import DomainError, ParseError
from polarkit.geometry import PinholeCamera, Plane, RigidTransform, backproject_depth, project_points
from polarkit.polar_decode import compute_iad, compute_stokes, decode
from polarkit.synth import Box, SceneSpec, Surface, look_at, polarizer_planes, polarizer_response

CAM = PinholeCamera(40.0, 40.0, 20.0, 16.0, 40, 32)
DIFF_45 = 0.04398316218763182799  # diffuse DoLP at 45 degrees, n = 1.5


def top_down(height=2.0, **kw) -> SceneSpec:
    return SceneSpec(CAM, look_at((0, 0, 0), (0, height, 0)), Plane((0, 1, 0), height), **kw)


class TestPolarizer:
    def test_unpolarized_halves(self):
        for a in (0.0, 0.3, 2.0):
            assert polarizer_response(0.8, 1.1, 0.0, a) == pytest.approx(0.4)

    def test_aligned(self):
        assert polarizer_response(0.8, 0.7, 1.0, 0.7) == pytest.approx(0.8)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        i, a, d = rng.uniform(0.1, 1, 100), rng.uniform(0, math.pi, 100), rng.uniform(0.05, 1, 100)
        iad = compute_iad(compute_stokes(polarizer_planes(i, a, d)))
        np.testing.assert_allclose(iad.intensity, i, atol=1e-15)
        np.testing.assert_allclose(iad.dolp, d, atol=1e-12)
        diff = np.abs(iad.aolp - a)
        np.testing.assert_allclose(np.minimum(diff, math.pi - diff), 0, atol=1e-9)


class TestRender:
    def test_top_down_ground(self):
        r = synth.render_scene(top_down(2.0))
        assert np.all(r.surface_id == synth.GROUND)
        np.testing.assert_allclose(r.depth, 2.0, rtol=1e-12)
        np.testing.assert_allclose(r.normals.normals[..., 2], 1.0, atol=1e-12)
        assert np.all(r.iad.dolp < 1e-20)
        assert not r.iad.valid.any()

    def test_face_at_45_degrees(self):
        face = Box((2, -1, 5), (8, 1.5, 6))
        scene = SceneSpec(CAM, look_at((0, 0, 0), (10, 0, 10)), Plane((0, 1, 0), 1.5), boxes=(face,), ambient=0.2)
        r = synth.render_scene(scene)
        on_face = r.surface_id == 1
        assert on_face.sum() > 50
        np.testing.assert_allclose(r.iad.dolp[on_face], DIFF_45, atol=1e-12)
        np.testing.assert_allclose(r.iad.dolp[on_face], sfp.dolp_diffuse(math.radians(45)), atol=1e-12)

    def test_nearest_box_wins(self):
        near = Box((-1, -1, 5), (1, 1, 6))
        far = Box((-3, -2, 9), (3, 1.5, 10))
        scene = SceneSpec(CAM, look_at((0, 0, 0), (0, 0, 1)), Plane((0, 1, 0), 1.5), boxes=(far, near))
        r = synth.render_scene(scene)
        assert r.depth[16, 20] == pytest.approx(5.0)
        assert r.surface_id[16, 20] == 2
        assert r.surface_id[16, 11] == 1 and r.depth[16, 11] == pytest.approx(9.0)

    def test_sky_is_miss(self):
        scene = SceneSpec(CAM, look_at((0, 0, 0), (0, 0, 1)), Plane((0, 1, 0), 1.5))
        r = synth.render_scene(scene)
        assert np.all(r.surface_id[0] == synth.MISS) and np.all(r.depth[0] == 0)
        assert not r.normals.valid[0].any()

    def test_scene_validation(self):
        with pytest.raises(DomainError):
            SceneSpec(CAM, look_at((0, 0, 0), (0, 0, 1)), Plane((0, 1, 0), 1.5), boxes=(Box((0, 0, 3), (1, 2, 4)),))
        with pytest.raises(DomainError):
            SceneSpec(PinholeCamera(10, 10, 5, 5, 11, 10), look_at((0, 0, 0), (0, 0, 1)), Plane((0, 1, 0), 1))
        with pytest.raises(DomainError):
            Surface(albedo=0)


class TestMosaic:
    def test_unpolarized_constant(self):
        r = synth.render_scene(top_down(2.0, ground_surface=Surface(albedo=0.6)))
        raw = synth.mosaic_from_iad(r.iad, 16)
        assert np.all(raw.data == synth.quantize(0.3, 16))

    def test_seed_determinism(self):
        scene = top_down(2.0, noise_sigma=0.01, seed=5)
        a, b = synth.render_mosaic(scene), synth.render_mosaic(scene)
        np.testing.assert_array_equal(a.data, b.data)
        c = synth.render_mosaic(synth.with_seed(scene, 6))
        assert not np.array_equal(a.data, c.data)

    def test_quantize_half_up(self):
        assert synth.quantize(0.5 / 255, 8) == 1
        assert synth.quantize(-1, 8) == 0 and synth.quantize(2, 8) == 255

    def test_noiseless_round_trip(self, fixtures):
        scene = synth.load_scene(fixtures / "scene.ini")
        r = synth.render_scene(scene)
        raw = synth.mosaic_from_iad(r.iad, 16, scene.layout)
        iad, _ = decode(raw, dtype=np.float64)
        # flat interior of the road: neighbours all see the same polarization state
        rows = slice(50, 58)
        lsb = 1 / 65535
        np.testing.assert_allclose(iad.intensity[rows, 2:40], r.iad.intensity[rows, 2:40], atol=lsb)
        on_road = r.surface_id[rows, 2:40] == synth.GROUND
        assert on_road.all()


def test_depth_consistent_with_projection(fixtures):
    scene = synth.load_scene(fixtures / "scene.ini")
    r = synth.render_scene(scene)
    pts = backproject_depth(r.depth, scene.camera)
    u, v = scene.camera.project(pts)
    rows, cols = np.nonzero(r.depth > 0)
    assert np.abs(u - cols).max() < 0.5 and np.abs(v - rows).max() < 0.5
    np.testing.assert_allclose(project_points(pts, RigidTransform.identity(), scene.camera), r.depth, rtol=1e-12)


class TestSceneFile:
    def test_parse_fixture(self, fixtures):
        scene = synth.load_scene(fixtures / "scene.ini")
        assert scene.camera.width == 80 and len(scene.boxes) == 1
        assert scene.seed == 7 and scene.ambient == 0.3

    def test_missing_section(self):
        with pytest.raises(ParseError):
            synth.parse_scene("[camera]\nfx = 1\n")

    def test_bad_number(self, fixtures):
        text = (fixtures / "scene.ini").read_text().replace("offset = 1.5", "offset = abc")
        with pytest.raises(ParseError):
            synth.parse_scene(text)

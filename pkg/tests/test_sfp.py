from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarkit import sfp
from polarkit.errors import DimensionError, DomainError
from polarkit.polar_decode import IadImage
from polarkit.sfp import (
    CandidateImage,
    Material,
    NormalImage,
    ReflectionMode,
    aolp_forward,
    azimuth_from_aolp,
    diffuse_supremum,
    disambiguate_with_prior,
    dolp_diffuse,
    dolp_specular,
    normal_from_angles,
    normals_from_polarization,
    zenith_from_dolp,
)

# 40-digit reference evaluations of the Fresnel DoLP formulas, n = 1.5
SPEC_30 = 0.3919183588453084957
DIFF_45 = 0.04398316218763182799
DIFF_25 = 0.01140095234906486219
SUP_15 = 0.3846153846153846154  # (n - 1/n)^2 / (2 + 2n^2 - (n + 1/n)^2)

D, S = ReflectionMode.DIFFUSE, ReflectionMode.SPECULAR


class TestForward:
    def test_aolp_specular(self):
        assert aolp_forward(math.pi / 2, S) == pytest.approx(0)

    def test_aolp_diffuse(self):
        assert aolp_forward(0.0, D) == 0
        assert aolp_forward(3 * math.pi / 2, D) == pytest.approx(math.pi / 2)

    def test_aolp_range(self):
        a = np.linspace(0, 2 * math.pi, 101, endpoint=False)
        for mode in (D, S):
            phi = aolp_forward(a, mode)
            assert np.all((phi >= 0) & (phi < math.pi))

    def test_specular_values(self):
        assert dolp_specular(0.0) == 0
        assert dolp_specular(math.atan(1.5)) == pytest.approx(1.0, abs=1e-14)
        assert dolp_specular(math.radians(30)) == pytest.approx(SPEC_30, abs=1e-14)

    def test_specular_peak_is_brewster(self):
        thetas = np.linspace(0, math.pi / 2 - 1e-6, 200001)
        rho = dolp_specular(thetas, Material(1.5))
        assert thetas[np.argmax(rho)] == pytest.approx(math.atan(1.5), abs=1e-4)
        t_peak, r_peak = sfp.specular_peak(1.5)
        assert t_peak == pytest.approx(math.atan(1.5), abs=1e-6)
        assert r_peak == pytest.approx(1.0, abs=1e-12)

    def test_specular_bounded_by_one(self):
        thetas = np.linspace(0, math.pi / 2 - 1e-6, 20001)
        for n in np.linspace(1.01, 5.0, 60):
            assert dolp_specular(thetas, n).max() <= 1 + 1e-12

    def test_diffuse_values(self):
        assert dolp_diffuse(0.0) == 0
        assert dolp_diffuse(math.radians(45)) == pytest.approx(DIFF_45, abs=1e-14)
        assert dolp_diffuse(math.pi / 2 - 1e-9) == pytest.approx(SUP_15, abs=1e-8)
        assert diffuse_supremum(1.5) == pytest.approx(SUP_15, abs=1e-15)

    def test_zenith_domain(self):
        with pytest.raises(DomainError):
            dolp_diffuse(math.pi / 2)
        with pytest.raises(DomainError):
            dolp_specular(-0.1)

    def test_material(self):
        with pytest.raises(DomainError):
            Material(1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1.5), st.floats(1.1, 3.0))
    def test_diffuse_monotone_and_bounded(self, theta, n):
        a, b = dolp_diffuse(theta, n), dolp_diffuse(min(theta + 0.05, 1.55), n)
        assert 0 <= a <= b < diffuse_supremum(n) + 1e-12


class TestZenith:
    def test_zero(self):
        assert zenith_from_dolp(0.0, 1.5, D) == [0.0]

    def test_diffuse_round_trip(self):
        (root,) = zenith_from_dolp(dolp_diffuse(math.radians(30)), 1.5, D)
        assert root == pytest.approx(math.radians(30), abs=1e-6)

    def test_specular_two_roots(self):
        roots = zenith_from_dolp(0.9, 1.5, S)
        assert len(roots) == 2
        assert roots[0] < math.atan(1.5) < roots[1]
        for r in roots:
            assert dolp_specular(r, 1.5) == pytest.approx(0.9, abs=1e-5)

    def test_above_supremum_empty(self):
        assert zenith_from_dolp(0.5, 1.5, D) == []

    def test_peak_single_root(self):
        assert len(zenith_from_dolp(1.0, 1.5, S)) == 1

    def test_invalid_rho(self):
        with pytest.raises(DomainError):
            zenith_from_dolp(1.2, 1.5, D)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.01, 1.5), st.floats(1.2, 2.5))
    def test_specular_roots_round_trip(self, theta, n):
        roots = zenith_from_dolp(dolp_specular(theta, n), n, S)
        assert min(abs(r - theta) for r in roots) < 1e-4


class TestAzimuth:
    def test_values(self):
        assert azimuth_from_aolp(0.0, D) == [0.0, math.pi]
        assert azimuth_from_aolp(0.0, S) == pytest.approx([math.pi / 2, 3 * math.pi / 2])
        assert azimuth_from_aolp(math.pi / 3, D) == pytest.approx([math.pi / 3, 4 * math.pi / 3])

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            azimuth_from_aolp(math.pi, D)


def one_pixel_iad(aolp, dolp, valid=True):
    full = lambda v: np.full((1, 1), v)
    return IadImage(full(1.0), full(aolp), full(dolp), full(valid))


class TestCandidates:
    def test_frontal_pixel(self):
        c = normals_from_polarization(one_pixel_iad(0.0, 0.0), 1.5, D).at(0, 0)
        assert c.zeniths == (0.0,)
        for n in c.normals():
            np.testing.assert_allclose(n, [0, 0, 1], atol=1e-15)

    def test_known_normal(self):
        alpha, theta = math.radians(40), math.radians(25)
        c = normals_from_polarization(one_pixel_iad(aolp_forward(alpha, D), DIFF_25), 1.5, D).at(0, 0)
        assert c.azimuths[0] == pytest.approx(alpha) or c.azimuths[1] == pytest.approx(alpha)
        assert math.pi + alpha == pytest.approx(c.azimuths[1])
        assert c.zeniths[0] == pytest.approx(theta, abs=1e-6)

    def test_above_supremum(self):
        c = normals_from_polarization(one_pixel_iad(0.0, 0.5), 1.5, D).at(0, 0)
        assert c.zeniths == ()

    def test_invalid_pixel_has_no_candidates(self):
        c = normals_from_polarization(one_pixel_iad(0.3, 0.2, valid=False), 1.5, D).at(0, 0)
        assert c.zeniths == ()


def candidate_image(alphas, thetas):
    return CandidateImage(np.array(alphas, float).reshape(1, 1, 2), np.array(thetas, float).reshape(1, 1, 2),
                          np.ones((1, 1), bool), D)


def prior_image(n):
    return NormalImage(np.array(n, float).reshape(1, 1, 3), np.ones((1, 1), bool))


class TestDisambiguate:
    def test_exact_match(self):
        t = math.radians(30)
        out = disambiguate_with_prior(candidate_image([0, math.pi], [t, np.nan]),
                                      prior_image([math.sin(t), 0, math.cos(t)]))
        assert out.valid[0, 0]
        np.testing.assert_allclose(out.normals[0, 0], normal_from_angles(t, 0.0), atol=1e-15)

    def test_empty(self):
        out = disambiguate_with_prior(candidate_image([0, math.pi], [np.nan, np.nan]), prior_image([0, 0, 1]))
        assert not out.valid[0, 0]
        np.testing.assert_array_equal(out.normals[0, 0], 0)

    def test_tie_prefers_smaller_azimuth(self):
        t = math.radians(30)
        a0 = math.pi / 2 - 0.4
        out = disambiguate_with_prior(candidate_image([a0, a0 + math.pi], [t, np.nan]), prior_image([0, 0, 1]))
        np.testing.assert_allclose(out.normals[0, 0], normal_from_angles(t, a0), atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            disambiguate_with_prior(candidate_image([0, 1], [0.1, np.nan]),
                                    NormalImage(np.zeros((2, 2, 3)), np.ones((2, 2), bool)))

    def test_angle_helpers_round_trip(self):
        t, a = 0.7, 4.0
        t2, a2 = sfp.angles_from_normal(normal_from_angles(t, a))
        assert (t2, a2) == pytest.approx((t, a))
        assert sfp.angular_error(normal_from_angles(0.0, 0.0), normal_from_angles(0.5, 1.0)) == pytest.approx(0.5)

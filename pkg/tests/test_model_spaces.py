import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ebgkit import (Direction, ProductSpace, RicciSpectrum, SpaceFactor, exact_ball_volume,
                    model_ball_volume, ricci_quadratic_form, ricci_spectrum, scalar_curvature)
from ebgkit.model_spaces import scalar_matched_curvature


def vol_h2r2(t):
    t = mp.mpf(t)
    return 2 * mp.pi**2 * (2 * t * mp.sinh(t) - 2 * mp.cosh(t) - t**2 + 2)


def vol_h3r2(t):
    t = mp.mpf(t)
    return mp.pi**2 / 6 * (-8 * t**3 - 3 * mp.sinh(2 * t) + 6 * t * mp.cosh(2 * t))


def vol_hr_5(t):
    # maximally symmetric 5-space with the scalar curvature of H^3 x R^2
    t = mp.mpf(t)
    a = mp.sqrt(mp.mpf(6) / 5)
    return mp.mpf(25) / 81 * mp.pi**2 * (36 * t + mp.sqrt(30) * (mp.sinh(2 * a * t) - 8 * mp.sinh(a * t)))


class TestFactors:
    def test_validation(self):
        with pytest.raises(ValueError):
            SpaceFactor(0, 0.0)
        with pytest.raises(ValueError):
            SpaceFactor(1, -1.0)
        with pytest.raises(ValueError):
            SpaceFactor(2, float("nan"))
        with pytest.raises(ValueError):
            ProductSpace.of((1, 0))

    def test_hyperbolic_plane_volume(self):
        f = SpaceFactor(2, -1.0)
        assert f.ball_volume(1.3) == pytest.approx(2 * math.pi * (math.cosh(1.3) - 1), rel=1e-12)

    def test_sphere_saturates(self):
        f = SpaceFactor(3, 1.0)
        assert f.ball_volume(10.0) == pytest.approx(2 * math.pi**2, rel=1e-12)
        assert f.sphere_area(4.0) == 0.0
        assert f.diameter == pytest.approx(math.pi)

    def test_labels_and_records(self):
        s = ProductSpace.of((2, -1), (2, 0))
        assert s.label == "H2xR2" and s.total_dim == 4
        assert s.blocks == ((0, 2), (2, 4))
        assert ProductSpace.from_record(s.to_record()) == s
        named = ProductSpace.of((3, 0.5), name="S3-half")
        assert ProductSpace.from_record(named.to_record()).label == "S3-half"


class TestSpectrum:
    def test_product_spectrum(self):
        spec = ricci_spectrum(ProductSpace.of((2, -1), (3, 0.5), (1, 0)))
        assert spec.eigenvalues == ((-1.0, 2), (0.0, 1), (1.0, 3))
        assert scalar_curvature(spec) == pytest.approx(1.0)
        assert spec.lambda_min == -1.0 and spec.lambda_max == 1.0

    def test_merging(self):
        spec = RicciSpectrum(((1.0, 1), (1.0, 2), (-1.0, 1)))
        assert spec.eigenvalues == ((-1.0, 1), (1.0, 3))
        with pytest.raises(ValueError):
            RicciSpectrum(((1.0, 0),))
        with pytest.raises(ValueError):
            RicciSpectrum(((1.0, 1),))

    def test_quadratic_form(self):
        spec = RicciSpectrum(((-1.0, 2), (0.0, 2)))
        x = Direction.normalized([1, 1, 1, 1])
        assert ricci_quadratic_form(spec, x) == pytest.approx(-0.5)
        with pytest.raises(ValueError):
            ricci_quadratic_form(spec, [1.0, 1.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            ricci_quadratic_form(spec, [1.0, 0.0])

    @given(st.lists(st.floats(-5, 5), min_size=2, max_size=6),
           st.lists(st.floats(-1, 1), min_size=6, max_size=6))
    def test_form_between_extremes(self, values, comps):
        comps = np.asarray(comps[:len(values)])
        if np.linalg.norm(comps) < 1e-3:
            return
        spec = RicciSpectrum.from_values(values)
        x = Direction.normalized(comps)
        q = ricci_quadratic_form(spec, x)
        assert spec.lambda_min - 1e-12 <= q <= spec.lambda_max + 1e-12

    def test_direction_unit(self):
        with pytest.raises(ValueError):
            Direction((1.0, 1.0))
        with pytest.raises(ValueError):
            Direction.normalized([0.0, 0.0])


class TestExactVolume:
    @pytest.mark.parametrize("t", [0.1, 0.7, 2.5, 6.0, 10.0])
    def test_h2r2_closed_form(self, t):
        s = ProductSpace.of((2, -1), (2, 0))
        assert exact_ball_volume(s, t) == pytest.approx(float(vol_h2r2(t)), rel=1e-8)

    @pytest.mark.parametrize("t", [0.1, 1.0, 4.0, 10.0])
    def test_h3r2_closed_form(self, t):
        s = ProductSpace.of((3, -1), (2, 0))
        assert exact_ball_volume(s, t) == pytest.approx(float(vol_h3r2(t)), rel=1e-8)

    def test_scalar_matched_model(self):
        k = scalar_matched_curvature(5, -6.0)
        assert k == pytest.approx(-0.3)
        for t in (0.5, 3.0, 8.0):
            assert model_ball_volume(5, k, t) == pytest.approx(float(vol_hr_5(t)), rel=1e-9)

    def test_flat_products_merge(self):
        s = ProductSpace.of((2, 0), (1, 0), (1, 0))
        assert exact_ball_volume(s, 1.5) == pytest.approx(math.pi**2 / 2 * 1.5**4, rel=1e-12)

    def test_three_factor_product(self):
        # S^2 x S^2 x R^1 against a direct mpmath shell integral
        s = ProductSpace.of((2, 1), (2, 1), (1, 0))
        t = 2.0

        def inner(r):  # S^2 x R^1 ball of radius r
            r = mp.mpf(r)
            return mp.quad(lambda a: 2 * mp.pi * mp.sin(a) * 2 * mp.sqrt(r**2 - a**2), [0, r])

        ref = mp.quad(lambda a: 2 * mp.pi * mp.sin(a) * inner(mp.sqrt(t**2 - a**2)), [0, t])
        assert exact_ball_volume(s, t) == pytest.approx(float(ref), rel=1e-8)

    def test_sphere_product_saturates(self):
        s = ProductSpace.of((2, 1), (2, 1))
        big = exact_ball_volume(s, 2 * math.pi)
        assert big == pytest.approx((4 * math.pi)**2, rel=1e-8)

    @settings(max_examples=20, deadline=None)
    @given(st.sampled_from([((2, -1), (2, 0)), ((2, 1), (1, 0)), ((3, -0.5), (2, 1))]),
           st.floats(0.05, 4.0), st.floats(0.01, 1.0))
    def test_monotone_in_radius(self, pairs, t, dt):
        s = ProductSpace.of(*pairs)
        assert exact_ball_volume(s, t + dt) >= exact_ball_volume(s, t)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            exact_ball_volume(ProductSpace.of((2, 0)), -1.0)
        with pytest.raises(ValueError):
            model_ball_volume(1, 0.0, 1.0)

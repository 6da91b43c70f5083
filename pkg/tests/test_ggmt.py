"""Scalar estimates: interpolation constants, the nonlocality functional,
the eigenvalue-count bound, coercivity and the exact rationals."""

import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import quad

from ksmode import ggmt, profile
from ksmode.radial import RadialFunction, make_grid, weighted_inner


def geometric_grid(n, rmax, growth=30.0):
    return make_grid(n, rmax, ("geometric", growth ** (1.0 / (n - 1))))


class TestAlphaBeta:
    def test_reference_values(self):
        a4, b4 = ggmt.alpha_beta(4.0)
        assert b4 == 1.0 / 36.0
        assert abs(a4 - (1.0 / 18.0 + math.log(3.0) - 0.5)) < 1e-15
        assert abs(a4 - 0.65417) < 1e-5
        assert a4 < 2.0 / 3.0

    def test_small_radius_limits(self):
        a, b = ggmt.alpha_beta(1e-5)
        assert abs(a) < 1e-9
        assert abs(b - 0.25) < 1e-9

    @pytest.mark.parametrize("R", [0.5, 1.0, 2.0, 4.0, 8.0])
    def test_quadrature_cross_validation(self, R):
        # alpha_beta raises internally beyond 1e-10; recheck independently
        a, b = ggmt.alpha_beta(R)
        aq, _ = quad(lambda r: r ** 3 / (2.0 + r * r) ** 2, 0.0, R)
        bq, _ = quad(lambda r: r / (2.0 + r * r) ** 2, R, np.inf)
        assert abs(a - aq) < 1e-10 and abs(b - bq) < 1e-10

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            ggmt.alpha_beta(0.0)


class TestW1Potential:
    def test_value_at_origin(self):
        assert np.isclose(float(ggmt.w1_potential(1.8, 0.0)), 8.6, atol=1e-14)

    def test_far_field(self):
        r = 1e3
        lead = (8.0 * 1.8 + 4.0) / r ** 4
        assert abs(float(ggmt.w1_potential(1.8, r)) / lead - 1.0) < 1e-2

    def test_positivity_boundary(self):
        with pytest.raises(ValueError):
            ggmt.w1_potential(-0.5, 1.0)


class TestMu:
    def test_reference_value(self):
        mu = ggmt.mu_functional(2, 0.2, ggmt.paper_weight())
        assert abs(mu - 1.9137) < 5e-3

    def test_linearity_in_inverse_weight(self):
        w = ggmt.paper_weight()
        mu1 = ggmt.mu_functional(2, 0.2, w)
        mu2 = ggmt.mu_functional(2, 0.2, w.scaled(2.0))
        assert abs(mu1 - 2.0 * mu2) < 1e-8 * mu1

    def test_constant_weight_finite(self):
        mu = ggmt.mu_functional(2, 0.2, ggmt.constant_weight(1.0))
        assert 0.0 < mu < np.inf

    def test_weak_tail_rejected(self):
        bad = ggmt.WeightSpec(fn=lambda r: np.asarray(r, dtype=float) ** -3.0,
                              w_inf=0.0, label="weak")
        with pytest.raises(ValueError):
            ggmt.mu_functional(2, 0.2, bad)


class TestCount:
    def test_prefactor(self):
        assert ggmt.ggmt_prefactor(4.0, 0.0) == pytest.approx(14.765625, abs=1e-12)

    def test_nonnegative_potential_counts_zero(self):
        assert ggmt.ggmt_count(4.0, 1.0, lambda r: 1.0 / (1.0 + r * r)) == 0.0

    def test_reference_pipeline_value(self):
        rep = ggmt.l2_pipeline()
        assert abs(rep.bigN - 0.8687) < 5e-3
        assert rep.bigN < 1.0

    def test_monotone_in_angular_index(self):
        rep = ggmt.l2_pipeline()
        u, _ = ggmt.schrodinger_potential(2, 0.2, 0.5, rep.mu,
                                          ggmt.paper_weight())
        values = [ggmt.ggmt_count(4.0, l, u)
                  for l in (rep.l_eff - 0.5, rep.l_eff, rep.l_eff + 0.5)]
        assert values[0] > values[1] > values[2]

    def test_non_compact_negative_part_rejected(self):
        with pytest.raises(ValueError):
            ggmt.ggmt_count(4.0, 1.0, lambda r: -1.0)


class TestPipeline:
    def test_all_scalars(self):
        rep = ggmt.l2_pipeline()
        assert rep.big_l == pytest.approx(11.36)
        assert rep.l_eff == pytest.approx(math.sqrt(0.25 + 5.68) - 0.5, abs=1e-12)
        assert abs(rep.l_eff - 1.9352) < 1e-4
        assert rep.u_infinity == pytest.approx(0.15 - 2.0 * rep.mu * 0.02)
        assert rep.u_infinity > 0.07  # consistent with the essential-spectrum floor
        assert (1.0 - rep.theta) * rep.big_l > 0.75
        assert 0.1 < rep.well[0] < 0.2 and 10.0 < rep.well[1] < 12.0

    def test_report_serialization(self):
        d = ggmt.l2_pipeline().to_dict()
        assert set(d) == {"l", "alpha", "p", "theta", "alphaR", "betaR", "mu",
                          "prefactor", "bigN", "l_eff", "u_infinity", "big_l",
                          "well"}


class TestCoercivityForm:
    def test_zero_function(self):
        grid = geometric_grid(200, 40.0)
        f = RadialFunction(grid, np.zeros(grid.n))
        assert ggmt.coercivity_form(f, 3) == 0.0

    def test_reference_bump_has_margin(self):
        grid = geometric_grid(400, 40.0)
        r = grid.nodes
        f = RadialFunction(grid, r ** 3 * np.exp(-r * r))
        form = ggmt.coercivity_form(f, 3)
        norm2 = float(weighted_inner(f, f, "r2"))
        assert form >= norm2 / 8.0

    @pytest.mark.parametrize("l", [3, 4, 5, 6])
    def test_random_bumps_bounded_below(self, l):
        from ksmode.acceptance import random_class_function
        grid = geometric_grid(400, 40.0)
        rng = np.random.default_rng(100 + l)
        for _ in range(10):
            f = random_class_function(rng, grid, l)
            form = ggmt.coercivity_form(f, l)
            norm2 = float(weighted_inner(f, f, "r2"))
            assert form >= norm2 / 8.0


class TestInterpolation:
    def test_l2_reference_function(self):
        grid = geometric_grid(600, 60.0)
        r = grid.nodes
        f = RadialFunction(grid, r * r * np.exp(-r))
        lhs, rhs, ok = ggmt.interpolation_check(f, 2, 4.0)
        assert ok and lhs <= rhs

    def test_random_l3(self):
        from ksmode.acceptance import random_class_function
        grid = geometric_grid(400, 40.0)
        rng = np.random.default_rng(5)
        for _ in range(10):
            f = random_class_function(rng, grid, 3)
            _, _, ok = ggmt.interpolation_check(f, 3, 4.0)
            assert ok

    def test_zero_function(self):
        grid = geometric_grid(200, 40.0)
        f = RadialFunction(grid, np.zeros(grid.n))
        lhs, rhs, ok = ggmt.interpolation_check(f, 2, 4.0)
        assert lhs == rhs == 0.0 and ok

    def test_low_class_rejected(self):
        grid = geometric_grid(200, 40.0)
        f = RadialFunction(grid, np.zeros(grid.n))
        with pytest.raises(ValueError):
            ggmt.interpolation_check(f, 1, 4.0)


class TestRationals:
    def test_exact_values(self):
        consts = ggmt.l3_rational_constants()
        assert consts.frac1 == Fraction(499, 10584)
        assert consts.frac2 == Fraction(1, 8) + Fraction(29, 17640)
        assert consts.frac1 > 0
        assert consts.frac2 > Fraction(1, 8)
        assert consts.frac1_with_angular_factor == 12 * consts.frac1
        assert consts.angular_factor_discrepancy


def test_pointwise_q_bounds():
    assert ggmt.pointwise_q_bounds(make_grid(500, 60.0))
    # spot value of the convexity combination at r = 1
    conv = profile.q_deriv(1.0, 2) - 2.0 * profile.q_deriv(1.0, 1)
    assert np.isclose(conv, 8.0 * 93.0 / 81.0, atol=1e-13)
    # the bounds are attained at the analytic critical points
    assert np.isclose(profile.q(np.sqrt(6.0)) * 6.0, 4.5, atol=1e-14)
    assert np.isclose(profile.q_deriv(2.0, 2) * 36.0, 136.0 / 3.0, atol=1e-12)

"""Tests for the closed-form and recursively defined diffusivity functions.

Expected values are computed from independent oracles: closed-form
antiderivatives, finite differences, one-dimensional quadrature of the
defining integrals, and an ordered-simplex Monte Carlo.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from curldrift import (
    ModelParams,
    chaos_weight_table,
    effective_diffusivity,
    enhancement_limit,
    enhancement_table,
    identity_suite,
    laplace_limit,
    log_rescale,
    truncated_limit,
    variance_sum,
    variance_sum_limit,
)

P1 = ModelParams(lambda_hat=1.0, nu=1.0, eps=0.1, lam=1.0)

params_strategy = st.builds(
    ModelParams,
    lambda_hat=st.floats(0.05, 3.0),
    nu=st.floats(0.3, 3.0),
    eps=st.floats(0.01, 0.49),
    lam=st.floats(0.1, 10.0),
)


class TestLogRescale:
    def test_value_at_inverse_eps_sq(self):
        # closed form: pref * log 2 at x = 1/eps^2
        expected = math.pi * math.log(2.0) / math.log(100.0)
        assert float(log_rescale(100.0, P1)) == pytest.approx(expected, rel=1e-14)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            log_rescale(0.0, P1)
        with pytest.raises(ValueError):
            log_rescale(-1.0, P1)

    def test_limit_at_fixed_argument(self):
        # at fixed x the rescaling tends to pi * lambda_hat^2 from above
        vals = [float(log_rescale(1.0, ModelParams(1.0, 1.0, e, 1.0)))
                for e in (1e-2, 1e-4, 1e-6, 1e-8)]
        target = math.pi
        assert all(abs(v - target) > abs(w - target) for v, w in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(target, rel=1e-7)

    def test_vanishes_at_infinity(self):
        assert float(log_rescale(1e300, P1)) == pytest.approx(0.0, abs=1e-280)

    @given(params_strategy, st.floats(0.01, 50.0), st.floats(1.01, 3.0))
    @settings(max_examples=50, deadline=None)
    def test_strictly_decreasing(self, p, x, factor):
        assert float(log_rescale(x, p)) > float(log_rescale(x * factor, p))


class TestEnhancementTable:
    def test_level_1_vanishes(self):
        tab = enhancement_table(3, 5.0, 257, P1)
        assert np.all(tab.values[1] == 0.0)

    def test_level_2_is_identity(self):
        tab = enhancement_table(3, 5.0, 1025, P1)
        assert np.max(np.abs(tab.values[2] - tab.x_grid)) < 1e-12

    @pytest.mark.parametrize("nu", [1.0, 1.7])
    def test_level_3_closed_form(self, nu):
        # antiderivative of 1/(1 + 4y/nu^4) is (nu^4/4) log(1 + 4x/nu^4)
        p = ModelParams(1.0, nu, 0.1, 1.0)
        tab = enhancement_table(3, 2 * math.pi, 8193, p)
        closed = nu**4 / 4.0 * np.log1p(4.0 / nu**4 * tab.x_grid)
        assert np.max(np.abs(tab.values[3] - closed)) < 1e-10

    def test_level_3_at_pi(self):
        tab = enhancement_table(3, 2 * math.pi, 8193, P1)
        assert float(tab.eval(3, math.pi)) == pytest.approx(
            math.log(1 + 4 * math.pi) / 4.0, abs=1e-9)

    def test_bounds_and_derivatives(self):
        p = ModelParams(1.0, 1.3, 0.1, 1.0)
        tab = enhancement_table(8, 2 * math.pi, 8193, p)
        x, h = tab.x_grid, tab.x_grid[1] - tab.x_grid[0]
        for j in range(1, 9):
            g = tab.values[j]
            assert g[0] == pytest.approx(0.0, abs=1e-14)
            assert np.all(g >= -1e-12) and np.all(g <= x + 1e-12)
            d1 = np.diff(g) / h
            assert np.all(d1 >= -1e-8) and np.all(d1 <= 1.0 + 1e-8)
            d2 = np.diff(g, 2) / h**2
            assert np.max(np.abs(d2)) <= 4.0 / p.nu**4 + 1e-6

    def test_bracketing_around_limit(self):
        tab = enhancement_table(12, 2 * math.pi, 8193, P1)
        g_cl = enhancement_limit(tab.x_grid, P1)
        for j in range(1, 13):
            if j % 2 == 1:
                assert np.all(tab.values[j] <= g_cl + 1e-10)
            else:
                assert np.all(tab.values[j] >= g_cl - 1e-10)

    def test_cauchy_rate(self):
        # |G_n - G_{n-1}| <= (4/nu^4)^{n-2} x^{n-1} / (n-1)! on [0, pi lh^2]
        p = ModelParams(1.0, 1.2, 0.1, 1.0)
        x_star = math.pi
        tab = enhancement_table(12, x_star, 2049, p)
        c = 4.0 / p.nu**4
        for n in range(2, 13):
            bound = c ** (n - 2) * tab.x_grid ** (n - 1) / math.factorial(n - 1)
            assert np.all(np.abs(tab.values[n] - tab.values[n - 1]) <= bound + 1e-12)

    def test_query_outside_range_rejected(self):
        tab = enhancement_table(2, 1.0, 257, P1)
        with pytest.raises(ValueError):
            tab.eval(2, 1.5)
        with pytest.raises(ValueError):
            tab.eval(2, -0.1)

    def test_validates_arguments(self):
        with pytest.raises(ValueError):
            enhancement_table(0, 1.0, 257, P1)
        with pytest.raises(ValueError):
            enhancement_table(2, -1.0, 257, P1)
        with pytest.raises(ValueError):
            enhancement_table(2, 1.0, 2, P1)


class TestEnhancementLimit:
    def test_at_zero(self):
        assert float(enhancement_limit(0.0, P1)) == 0.0

    def test_at_pi(self):
        # (1/4)(sqrt(8 pi + 1) - 1)
        expected = (math.sqrt(8 * math.pi + 1) - 1) / 4.0
        assert float(enhancement_limit(math.pi, P1)) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("nu", [0.7, 1.0, 2.1])
    def test_ode_residual_finite_differences(self, nu):
        # fourth-order stencil keeps both truncation and roundoff well
        # below the 1e-10 budget across the nu range
        p = ModelParams(1.0, nu, 0.1, 1.0)
        x = np.linspace(0.5, 6.0, 101)
        h = 1e-3
        g = lambda y: enhancement_limit(y, p)
        d = (g(x - 2 * h) - 8 * g(x - h) + 8 * g(x + h) - g(x + 2 * h)) / (12 * h)
        resid = d * (1.0 + 4.0 / nu**4 * g(x)) - 1.0
        assert np.max(np.abs(resid)) < 1e-10


class TestEffectiveDiffusivity:
    def test_reference_point(self):
        eff = effective_diffusivity(P1)
        c_sq = 4.0 * (math.sqrt(2 * math.pi + 0.25) - 0.5)
        assert eff.c_sq == pytest.approx(c_sq, rel=1e-15)
        assert eff.c == pytest.approx(math.sqrt(c_sq), rel=1e-15)
        assert eff.total_variance_rate == pytest.approx(c_sq + 2.0, rel=1e-15)

    def test_zero_coupling_degenerates(self):
        p = ModelParams(0.0, 1.4, 0.1, 1.0)
        eff = effective_diffusivity(p)
        assert eff.c_sq == 0.0
        assert eff.total_variance_rate == pytest.approx(2 * 1.4**2, rel=1e-15)

    @given(params_strategy)
    @settings(max_examples=100, deadline=None)
    def test_identity_suite(self, p):
        assert all(r["passed"] for r in identity_suite(p, tol=1e-10))

    @given(params_strategy)
    @settings(max_examples=50, deadline=None)
    def test_laplace_limit_identity(self, p):
        assert p.lam**2 * laplace_limit(p) == pytest.approx(
            effective_diffusivity(p).c_sq, rel=1e-12, abs=1e-12)


class TestTruncatedLimit:
    def test_level_1_closed_form(self):
        p = ModelParams(1.3, 1.1, 0.1, 1.0)
        expected = 2 * math.pi * p.lambda_hat**2 / p.nu**2
        assert truncated_limit(1, p) == pytest.approx(expected, rel=1e-10)

    def test_level_2_closed_form(self):
        assert truncated_limit(2, P1) == pytest.approx(
            2 * math.log(1 + 4 * math.pi) / 4.0, rel=1e-9)

    def test_converges_to_closed_form(self):
        limit = 2.0 * float(enhancement_limit(math.pi, P1))
        assert truncated_limit(40, P1) == pytest.approx(limit, abs=1e-9)
        # consistency with the effective diffusivity: (2/nu^2) G(pi lh^2) = c^2/4
        assert limit == pytest.approx(effective_diffusivity(P1).c_sq / 4.0, rel=1e-12)

    def test_alternation_around_limit(self):
        limit = 2.0 * float(enhancement_limit(math.pi, P1))
        for n in range(1, 8):
            v = truncated_limit(n, P1)
            if (n + 1) % 2 == 1:
                assert v <= limit + 1e-10
            else:
                assert v >= limit - 1e-10

    def test_zero_coupling(self):
        assert truncated_limit(3, ModelParams(0.0, 1.0, 0.1, 1.0)) == 0.0


class TestChaosWeights:
    def test_row_zero_is_one(self):
        w = chaos_weight_table(3, 2, 4.0, 1025, P1)
        assert np.all(w.values[0] == 1.0)

    def test_value_at_origin(self):
        w = chaos_weight_table(4, 3, 4.0, 1025, P1)
        assert w.values[0][0] == 1.0
        for i in range(1, 4):
            assert abs(w.values[i][0]) < 1e-14

    def test_index_validation(self):
        with pytest.raises(IndexError):
            chaos_weight_table(3, 4, 4.0, 257, P1)
        with pytest.raises(IndexError):
            chaos_weight_table(3, 0, 4.0, 257, P1)

    def test_row_1_closed_form(self):
        # family (n=3, j=2): row 1 integrates 4/(1+u)^2 du -> 1 - 1/(1+4x)
        w = chaos_weight_table(3, 2, 4.0, 8193, P1)
        x = w.x_grid
        assert np.max(np.abs(w.values[1] - (1.0 - 1.0 / (1.0 + 4 * x)))) < 1e-10

    def test_row_2_quadrature_oracle(self):
        # family (n=3, j=2): row 2 via the reduced 1-d integral with the
        # closed forms of levels 2 and 3 in the denominators
        w = chaos_weight_table(3, 2, 2.0, 8193, P1)

        def integrand(u):
            return (1.0 - 1.0 / (1.0 + u)) / (1.0 + math.log1p(u)) ** 2

        for x in (0.5, 1.0, 2.0):
            expected, _ = quad(integrand, 0.0, 4.0 * x, limit=200)
            assert float(w.eval(2, x)) == pytest.approx(expected, abs=1e-8)

    def test_simplex_monte_carlo_oracle(self):
        # one-shot check of the ordered-simplex integral definition at x = 1
        rng = np.random.default_rng(1234)
        x = 1.0
        n_mc = 200_000
        u = np.sort(rng.uniform(0.0, 4.0 * x, size=(n_mc, 2)), axis=1)
        # factors: level 2 (closed: y) at u0, level 3 (closed: log) at u1
        vals = (1.0 / (1.0 + u[:, 0]) ** 2) * (1.0 / (1.0 + np.log1p(u[:, 1])) ** 2)
        vol = (4.0 * x) ** 2 / 2.0  # ordered-simplex volume
        est = vals.mean() * vol
        sem = vals.std(ddof=1) / math.sqrt(n_mc) * vol
        w = chaos_weight_table(3, 2, 2.0, 8193, P1)
        assert abs(float(w.eval(2, x)) - est) < 4.0 * sem

    def test_volume_bound(self):
        p = ModelParams(1.0, 1.1, 0.1, 1.0)
        c = 4.0 / p.nu**4
        for j in (1, 3, 5):
            w = chaos_weight_table(5, j, 3.0, 2049, p)
            for i in range(1, j + 1):
                bound = c**i * w.x_grid**i / math.factorial(i)
                assert np.all(w.values[i] <= bound * (1 + 1e-9) + 1e-10)


class TestVarianceSum:
    def test_at_origin(self):
        for n in (0, 1, 5):
            assert float(variance_sum(n, 0.0, P1)) == pytest.approx(1.0, abs=1e-12)

    def test_limit_value(self):
        assert float(variance_sum_limit(math.pi, P1)) == pytest.approx(
            math.sqrt(8 * math.pi + 1), rel=1e-14)

    def test_monotone_convergence(self):
        target = float(variance_sum_limit(math.pi, P1))
        devs = [abs(float(variance_sum(n, math.pi, P1)) - target)
                for n in range(2, 24)]
        assert all(b <= a + 1e-12 for a, b in zip(devs, devs[1:]))
        assert devs[-1] < 1e-10

    def test_total_enhancement_identity(self):
        # 1 + (4/nu^4) G(x) equals the variance-sum limit pointwise
        p = ModelParams(1.0, 1.6, 0.1, 1.0)
        x = np.linspace(0.0, 5.0, 64)
        lhs = 1.0 + 4.0 / p.nu**4 * enhancement_limit(x, p)
        assert np.max(np.abs(lhs - variance_sum_limit(x, p))) < 1e-12

"""Test functions, midpoint integrals, cubic averages, and moments."""

import math

import numpy as np
import pytest
from scipy import integrate as sci_integrate

from smashlab.errors import ConfigError
from smashlab.geometry import Ball, Box, GridSpec, Mask, rasterize, working_grid
from smashlab.quadrature import (
    builtin_suite,
    constant_fn,
    coordinate_fn,
    cubic_average,
    estimate_cs,
    integrate,
    make_test_function,
    mean_value_max_excess,
    mollified_newton_fn,
    neg_square_fn,
    newton_fn,
    quadrature_slack,
    second_moment,
    slack_tolerance,
)
from smashlab.sandpile import StabilizeParams, field_from_shapes, smash_sum


def grid2d(h=1 / 64, half=2.0):
    n = int(round(2 * half / h))
    return GridSpec(h, (-half, -half), (n, n))


class TestIntegrate:
    def test_constant_over_aligned_box(self):
        g = GridSpec(1 / 64, (-0.25, -0.25), (96, 96))
        m = rasterize(Box((0, 0), (1, 1)), g)
        assert integrate(constant_fn(2, 1.0), m) == pytest.approx(1.0, abs=0)

    def test_neg_square_over_unit_ball(self):
        g = grid2d(h=1 / 128, half=1.25)
        m = rasterize(Ball((0, 0), 1.0), g)
        val = integrate(neg_square_fn(2, (0.0, 0.0)), m)
        assert abs(val - (-math.pi / 2)) <= 0.01 * math.pi / 2

    def test_odd_function_cancels(self):
        g = grid2d(h=1 / 64, half=1.25)
        m = rasterize(Ball((0, 0), 1.0), g)
        assert abs(integrate(coordinate_fn(2, 0, +1), m)) < 1e-12

    def test_pole_inside_region_raises(self):
        g = grid2d(h=1 / 32, half=1.0)
        m = rasterize(Ball((0, 0), 0.5), g)
        with pytest.raises(ConfigError, match="pole"):
            integrate(newton_fn(2, (0.1, 0.0)), m)


class TestSecondMoment:
    def test_unit_ball_value(self):
        g = grid2d(h=1 / 128, half=1.25)
        m = rasterize(Ball((0, 0), 1.0), g)
        # radial integral of r^2 over the unit disk is pi/2
        assert abs(second_moment(m, (0.0, 0.0)) - math.pi / 2) <= 0.01 * math.pi / 2

    def test_empty_mask(self):
        g = grid2d(h=1 / 32, half=1.0)
        assert second_moment(Mask(g, np.zeros(g.shape, dtype=bool)), (0.0, 0.0)) == 0.0

    def test_parallel_axis_identity(self):
        rng = np.random.default_rng(7)
        g = grid2d(h=1 / 32, half=1.0)
        cells = rng.random(g.shape) < 0.3
        m = Mask(g, cells)
        c = m.centroid()
        p = np.array([0.31, -0.77])
        lhs = second_moment(m, p)
        rhs = m.measure * float(np.sum((p - c) ** 2)) + second_moment(m, c)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestCubicAverage:
    def test_odd_monomials_vanish(self):
        for d in (1, 2, 3):
            y = np.arange(1.0, d + 1.0)
            for axis in range(d):
                val = cubic_average(lambda p, a=axis: p[:, a], (0.0,) * d, tuple(y))
                assert abs(val) < 1e-14

    def test_mixed_products_vanish(self):
        y = (0.3, -0.9)
        val = cubic_average(lambda p: p[:, 0] * p[:, 1], (0.0, 0.0), y)
        assert abs(val) < 1e-14

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_random_quadratics_closed_form(self, d):
        rng = np.random.default_rng(11 + d)
        for _ in range(100):
            A = rng.normal(size=(d, d))
            A = (A + A.T) / 2
            b = rng.normal(size=d)
            c = float(rng.normal())
            x = rng.normal(size=d) * 0.5
            y = x + rng.normal(size=d)

            def quad(p):
                z = p - x
                return np.einsum("ni,ij,nj->n", z, A, z) + (p - x) @ b + c

            # orbit average about x: value at x plus trace(Hess)|y-x|^2/(2d)
            expected = c + np.trace(2 * A) * float(np.sum((y - x) ** 2)) / (2 * d)
            got = cubic_average(quad, tuple(x), tuple(y))
            scale = max(1.0, abs(expected))
            assert abs(got - expected) <= 1e-12 * scale

    def test_invariant_under_group(self):
        from smashlab.geometry import cubic_isometries

        rng = np.random.default_rng(3)
        s = neg_square_fn(2, (0.2, -0.1))
        x = np.array([0.15, 0.25])
        y = np.array([1.0, -0.4])
        base = cubic_average(s, tuple(x), tuple(y))
        for u in cubic_isometries(2):
            yy = u.apply(y - x) + x
            assert cubic_average(s, tuple(x), tuple(yy)) == pytest.approx(base, rel=1e-14)


def shell_convolution_oracle(d, rho, t):
    """Radial convolution of the kernel with the bump, by quadrature."""
    if d == 1:
        c = 15.0 / (16.0 * rho)
        shell = lambda u: 2.0 * c * (1 - (u / rho) ** 2) ** 2
        kern = lambda u: -u
    elif d == 2:
        c = 3.0 / (math.pi * rho**2)
        shell = lambda u: 2.0 * math.pi * u * c * (1 - (u / rho) ** 2) ** 2
        kern = lambda u: -math.log(u)
    else:
        c = 105.0 / (32.0 * math.pi * rho**3)
        shell = lambda u: 4.0 * math.pi * u**2 * c * (1 - (u / rho) ** 2) ** 2
        kern = lambda u: 1.0 / u
    # mass inside radius t sees the kernel at t; outer shells contribute K(u)
    m_in, _ = sci_integrate.quad(shell, 0.0, min(t, rho), limit=200)
    if t >= rho:
        return kern(t)
    outer, _ = sci_integrate.quad(lambda u: shell(u) * kern(u), t, rho, limit=200)
    return kern(t) * m_in + outer


class TestMollifiedKernel:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_radial_convolution(self, d):
        rho = 0.8
        pole = (0.0,) * d
        s = mollified_newton_fn(d, pole, rho)
        for t in (1e-6, 0.1, 0.3, 0.62, 0.799, 0.9, 2.0):
            p = np.zeros((1, d))
            p[0, 0] = t
            got = float(s(p)[0])
            want = shell_convolution_oracle(d, rho, t)
            assert got == pytest.approx(want, rel=1e-8, abs=1e-10)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_unit_total_mass(self, d):
        # the bump integrates to one, so far away the potential matches the kernel
        rho = 0.5
        s = mollified_newton_fn(d, (0.0,) * d, rho)
        p = np.zeros((1, d))
        p[0, 0] = 3.0
        kern = {1: -3.0, 2: -math.log(3.0), 3: 1 / 3.0}[d]
        assert float(s(p)[0]) == pytest.approx(kern, rel=1e-12)

    def test_c1_across_sphere(self):
        s = mollified_newton_fn(2, (0.0, 0.0), 1.0)
        eps = 1e-6
        pts = np.array([[1.0 - eps, 0.0], [1.0 + eps, 0.0]])
        vals = s(pts)
        slope = (vals[1] - vals[0]) / (2 * eps)
        assert slope == pytest.approx(-1.0, abs=1e-4)


class TestSuperharmonicity:
    @pytest.mark.parametrize("h", [1 / 32, 1 / 64])
    def test_discrete_mean_value_inequality(self, h):
        g = grid2d(h=h, half=1.0)
        m = rasterize(Ball((0, 0), 0.8), g)
        pole = (2.5, 1.0)
        cases = [
            (neg_square_fn(2, (0.1, 0.0)), 0.0),
            (newton_fn(2, pole), None),
            (mollified_newton_fn(2, pole, 0.5), None),
            (mollified_newton_fn(2, (1.2, 0.0), 0.9), None),  # bump overlaps region
        ]
        for s, slack in cases:
            excess = mean_value_max_excess(s, m)
            if slack is None:
                c4 = s.c4_of(0.3, 4.0)
                slack = 10 * h**4 * max(c4, 1.0)
            assert excess <= slack + 1e-15, s.name

    def test_harmonic_functions_flat(self):
        g = grid2d(h=1 / 32, half=1.0)
        m = rasterize(Ball((0, 0), 0.8), g)
        for s in (constant_fn(2, 1.0), coordinate_fn(2, 0, 1), coordinate_fn(2, 1, -1)):
            assert abs(mean_value_max_excess(s, m)) < 1e-13


class TestSlack:
    def setup_method(self):
        h = 1 / 64
        self.a = Ball((0.0, 0.0), 1.0)
        self.g = working_grid([self.a, self.a], h)
        self.w = field_from_shapes([self.a, self.a], self.g)
        self.res = smash_sum(self.w, StabilizeParams(kappa=1.9))

    def test_constant_pair_brackets_zero(self):
        tol = slack_tolerance(constant_fn(2, 1.0), self.res.domain)
        s_plus = quadrature_slack(self.res.domain, self.w, constant_fn(2, 1.0))
        s_minus = quadrature_slack(self.res.domain, self.w, constant_fn(2, -1.0))
        assert s_plus >= -tol and s_minus >= -tol
        assert abs(s_plus) <= tol and abs(s_minus) <= tol

    def test_coordinate_pair_brackets_zero(self):
        tol = slack_tolerance(coordinate_fn(2, 0, 1), self.res.domain)
        sp = quadrature_slack(self.res.domain, self.w, coordinate_fn(2, 0, +1))
        sm = quadrature_slack(self.res.domain, self.w, coordinate_fn(2, 0, -1))
        assert abs(sp) <= tol and abs(sm) <= tol

    def test_neg_square_matches_radial_oracle(self):
        # two unit disks of density one versus the sqrt(2) disk:
        # slack = -2 * int_{B_1} r^2 + int_{B_sqrt2} r^2, by 1d radial quadrature
        s = neg_square_fn(2, (0.0, 0.0))
        got = quadrature_slack(self.res.domain, self.w, s)
        inner, _ = sci_integrate.quad(lambda r: 2 * math.pi * r * r * r, 0, 1.0)
        outer, _ = sci_integrate.quad(lambda r: 2 * math.pi * r * r * r, 0, math.sqrt(2.0))
        oracle = -2 * inner + outer  # equals pi
        assert oracle == pytest.approx(math.pi, rel=1e-12)
        # one boundary layer of the domain weighted by |s| ~ 2 dominates
        assert got == pytest.approx(oracle, abs=2.0 * 3 * (1 / 64) * 2 * math.pi * math.sqrt(2))
        assert got >= 0.0

    def test_builtin_battery_nonnegative(self):
        for s in builtin_suite(self.g):
            slack = quadrature_slack(self.res.domain, self.w, s)
            tol = slack_tolerance(s, self.res.domain)
            assert slack >= -tol, s.id_string


class TestEstimateCs:
    def test_quadratic_and_constant_are_zero(self):
        g = grid2d(h=1 / 32, half=1.0)
        m = rasterize(Ball((0, 0), 0.5), g)
        assert estimate_cs(neg_square_fn(2, (0.0, 0.0)), m) == 0.0
        assert estimate_cs(constant_fn(2, 1.0), m) == 0.0

    def test_log_kernel_uses_declared_bound(self):
        g = grid2d(h=1 / 32, half=1.0)
        m = rasterize(Ball((0, 0), 0.5), g)
        pole = (3.0, 0.0)
        got = estimate_cs(newton_fn(2, pole), m)
        # declared bound is (2 / t^3) / 2 at the closest approach
        dists = np.linalg.norm(m.true_centers() - np.asarray(pole), axis=1)
        tmin = float(dists.min()) - 0.5 * g.h * math.sqrt(2)
        assert got == pytest.approx(1.0 / tmin**3, rel=1e-12)
        # and it really dominates the trimmed finite-difference sample
        from smashlab.quadrature import _fd_third_derivative_max

        assert got >= _fd_third_derivative_max(newton_fn(2, pole), m)

    def test_fd_fallback_with_safety(self):
        from smashlab.quadrature import TestFunction

        g = grid2d(h=1 / 32, half=1.0)
        m = rasterize(Ball((0, 0), 0.4), g)
        cubic = TestFunction("cubic", 2, lambda p: p[:, 0] ** 3)
        got = estimate_cs(cubic, m)
        # third derivative of x^3 is 6, Taylor constant 1, doubled for safety
        assert got == pytest.approx(2.0, rel=1e-6)


class TestFactory:
    def test_make_from_config(self):
        s = make_test_function({"id": "mollified_newton", "pole": [3.0, 0.0], "rho": 0.5}, 2)
        assert s.name == "mollified_newton"
        with pytest.raises(ConfigError):
            make_test_function({"id": "nope"}, 2)

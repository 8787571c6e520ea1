import math

import numpy as np
import pytest
from scipy import integrate

from sizestructured.errors import (
    BoundaryRootError,
    BracketError,
    GridTooCoarseError,
    NumericalError,
    ReversedIntervalError,
)
from sizestructured.numerics import (
    DEFAULT_TOLERANCES,
    TOLERANCE_PROFILES,
    Grid1D,
    Rectangle,
    ToleranceSet,
    complex_roots_in_rectangle,
    exp_convolution,
    exp_moments,
    find_root_bracketed,
    grid_budget,
    laplace_filon,
    newton_polish,
    ode_solve,
    quad,
    simpson_weights,
    trapezoid_weights,
    volterra2_solve,
)


class TestGrid:
    def test_rejects_unsorted_nodes(self):
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, 1.0, 1.0]))

    def test_rejects_single_node(self):
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0]))

    def test_uniform_properties(self):
        g = Grid1D.uniform(1.0, 3.0, 8, weight_exponent=0.5)
        assert g.size == 9 and g.is_uniform()
        assert g.max_spacing == pytest.approx(0.25)
        np.testing.assert_allclose(g.weights(), np.exp(0.5 * g.nodes))

    def test_nodes_are_read_only(self):
        g = Grid1D.uniform(0.0, 1.0, 4)
        with pytest.raises(ValueError):
            g.nodes[0] = 5.0


class TestTolerances:
    def test_profiles_and_overrides(self):
        assert TOLERANCE_PROFILES["default"] is DEFAULT_TOLERANCES
        t = DEFAULT_TOLERANCES.with_(picard_tol=1e-6)
        assert t.picard_tol == 1e-6 and t.root_tol == DEFAULT_TOLERANCES.root_tol

    @pytest.mark.parametrize("field", ["ode_rel", "quad_rel", "picard_tol", "root_tol", "tail_tol"])
    def test_non_positive_rejected(self, field):
        with pytest.raises(ValueError):
            ToleranceSet(**{field: 0.0})

    def test_grid_budget(self):
        assert grid_budget(0.1) == pytest.approx(0.01)
        assert grid_budget(0.1, 50.0) == pytest.approx(0.5)
        assert grid_budget(0.1, 0.2) == pytest.approx(0.01)


class TestODE:
    def test_exponential_decay(self):
        sol = ode_solve(lambda t, y: -y, 0.0, 2.0, 1.0, n_steps=200)
        assert abs(sol.final - math.exp(-2.0)) < 1e-10

    def test_fourth_order(self):
        errs = [abs(ode_solve(lambda t, y: np.cos(t) * y, 0.0, 3.0, 1.0, n_steps=n).final - math.exp(math.sin(3.0))) for n in (40, 80)]
        assert 14.0 < errs[0] / errs[1] < 20.0

    def test_backward_integration(self):
        sol = ode_solve(lambda t, y: -y, 1.0, 0.0, math.exp(-1.0), n_steps=100)
        assert abs(sol.final - 1.0) < 1e-9

    def test_blowup_is_reported(self):
        with pytest.raises(NumericalError):
            ode_solve(lambda t, y: y * y, 0.0, 2.0, 1.0, n_steps=400)

    def test_vector_state(self):
        rot = lambda t, y: np.array([-y[1], y[0]])  # noqa: E731
        sol = ode_solve(rot, 0.0, math.pi, np.array([1.0, 0.0]), n_steps=400)
        np.testing.assert_allclose(sol.final, [-1.0, 0.0], atol=1e-9)


class TestQuadrature:
    def test_trapezoid_linear_exact(self, rng):
        x = np.sort(rng.uniform(0, 3, 17))
        assert trapezoid_weights(x) @ (2 * x + 1) == pytest.approx(x[-1] ** 2 + x[-1] - x[0] ** 2 - x[0])

    @pytest.mark.parametrize("n", [11, 12, 2, 3])
    def test_simpson_matches_scipy_on_nonuniform_nodes(self, rng, n):
        x = np.sort(rng.uniform(0, 2, n))
        y = np.exp(x) * np.sin(3 * x)
        assert simpson_weights(x) @ y == pytest.approx(integrate.simpson(y, x=x), rel=1e-12, abs=1e-14)

    def test_simpson_cubic_exact_uniform(self):
        x = np.linspace(0, 2, 9)
        assert simpson_weights(x) @ (x**3) == pytest.approx(4.0, rel=1e-14)

    def test_quad_sine(self):
        assert quad(np.sin, 0.0, math.pi) == pytest.approx(2.0, rel=1e-12)
        assert quad(np.sin, 0.0, math.pi, rule="trapezoid") == pytest.approx(2.0, rel=1e-6)

    def test_quad_reversed_interval(self):
        with pytest.raises(ReversedIntervalError):
            quad(np.sin, 1.0, 0.0)

    def test_quad_empty_interval(self):
        assert quad(np.sin, 1.0, 1.0) == 0.0


class TestVolterra:
    @staticmethod
    def _errors(c, hs, T=2.0):
        out = []
        for h in hs:
            grid = Grid1D.uniform(0.0, T, int(round(T / h)))
            b = volterra2_solve(lambda t, s: c * np.ones_like(s), lambda t: np.ones_like(t), grid)
            out.append(float(np.max(np.abs(b - np.exp(c * grid.nodes)))))
        return out

    def test_constant_kernel_second_order(self):
        e = self._errors(0.7, (0.1, 0.05, 0.025))
        assert 3.8 < e[0] / e[1] < 4.2 and 3.8 < e[1] / e[2] < 4.2

    def test_matrix_kernel_matches_callable(self):
        grid = Grid1D.uniform(0.0, 1.0, 20)
        t = grid.nodes
        K = np.tril(np.exp(-(t[:, None] - t[None, :])))
        b1 = volterra2_solve(K, np.cos(t), grid)
        b2 = volterra2_solve(lambda tk, s: np.exp(-(tk - s)), np.cos, grid)
        np.testing.assert_allclose(b1, b2, rtol=1e-14)

    def test_coarse_grid_rejected(self):
        grid = Grid1D.uniform(0.0, 1.0, 2)
        with pytest.raises(GridTooCoarseError):
            volterra2_solve(lambda t, s: 10.0 * np.ones_like(s), lambda t: np.ones_like(t), grid)


class TestRoots:
    def test_bracketed_root(self):
        assert find_root_bracketed(np.cos, 0.0, 3.0, tol=1e-14) == pytest.approx(math.pi / 2, abs=1e-13)

    def test_no_sign_change(self):
        with pytest.raises(BracketError):
            find_root_bracketed(lambda x: x * x + 1.0, -1.0, 1.0)

    def test_newton_polish(self):
        z, res = newton_polish(lambda z: z * z + 1.0, 0.2 + 0.8j)
        assert abs(z - 1j) < 1e-10 and res < 1e-12

    def test_polynomial_roots_in_rectangle(self):
        roots = [1.0, -2.0j, 0.5 + 0.5j, -0.3 - 0.2j]
        f = lambda z: np.prod([z - r for r in roots], axis=0)  # noqa: E731
        found = complex_roots_in_rectangle(f, Rectangle(-1.1, 1.7, -2.6, 1.3))
        assert len(found) == 4
        for r in roots:
            assert min(abs(q.value - r) for q in found) < 1e-9

    def test_roots_outside_are_ignored(self):
        f = lambda z: (z - 3.0) * (z + 0.25j)  # noqa: E731
        found = complex_roots_in_rectangle(f, (-1.0, 1.0, -1.0, 1.0))
        assert len(found) == 1 and abs(found[0].value + 0.25j) < 1e-10

    def test_double_root_multiplicity(self):
        found = complex_roots_in_rectangle(lambda z: (z - 0.1 - 0.2j) ** 2 * (z + 0.5), (-1.0, 1.0, -1.0, 1.0))
        assert sum(r.multiplicity for r in found) == 3

    def test_root_on_boundary(self):
        with pytest.raises(BoundaryRootError):
            complex_roots_in_rectangle(lambda z: z - 1.0, (-1.0, 1.0, -1.0, 1.0))

    def test_exponential_polynomial(self):
        # z + 1 - e^{-z}: the only root with Re z > -1 in the box is z = 0
        found = complex_roots_in_rectangle(lambda z: z + 1.0 - np.exp(-z), (-0.5, 2.0, -3.0, 3.0))
        assert len(found) == 1 and abs(found[0].value) < 1e-10


class TestFilon:
    @pytest.mark.parametrize("u", [0.3 + 0.1j, 0.999, 1.001, 5.0 - 2.0j, 40.0j])
    def test_moments_against_quadrature(self, u):
        v = np.linspace(0.0, 1.0, 20001)
        got = exp_moments(np.array([u]))
        for m in range(3):
            ref = integrate.simpson(v**m * np.exp(-u * v), x=v)
            assert abs(got[m][0] - ref) < 1e-10

    def test_laplace_of_constant(self):
        z = 0.7 + 3.0j
        L = 10.0
        h = 0.05
        q = np.ones(int(round(L / h)) + 1)
        assert abs(laplace_filon(q, h, z) - (1 - np.exp(-z * L)) / z) < 1e-13

    def test_laplace_large_frequency(self):
        # int_0^L a e^{-z a} da with |z| h = 25: exact for quadratics
        z = 500.0j
        h = 0.05
        a = h * np.arange(201)
        L = a[-1]
        exact = (1 - np.exp(-z * L) * (1 + z * L)) / z**2
        assert abs(laplace_filon(a, h, z) - exact) < 1e-12

    def test_odd_interval_count(self):
        h = 0.01
        a = h * np.arange(102)
        q = np.exp(-a) * np.cos(a)
        z = 0.4 - 1.0j
        dense = np.linspace(0, a[-1], 200001)
        ref = integrate.simpson(np.exp(-dense) * np.cos(dense) * np.exp(-z * dense), x=dense)
        assert abs(laplace_filon(q, h, z) - ref) < 1e-8

    def test_exp_convolution_against_direct(self):
        lam = 0.3 + 2.0j
        s = np.linspace(0.0, 3.0, 60001)
        ref = integrate.simpson((np.sin(s) + 0.5) * np.exp(-lam * (3.0 - s)), x=s)
        errs = []
        for h in (0.04, 0.02, 0.01):
            a = h * np.arange(int(round(3.0 / h)) + 1)
            y = exp_convolution(np.sin(a) + 0.5, h, lam)
            assert y[0] == 0.0
            errs.append(abs(y[-1] - ref))
        # local quadratic interpolation: third order
        assert errs[-1] < 1e-7
        assert 7.0 < errs[0] / errs[1] < 9.0 and 7.0 < errs[1] / errs[2] < 9.0

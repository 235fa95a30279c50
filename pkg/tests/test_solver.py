import math

import numpy as np
import pytest

from stillsim import solver
from stillsim.solver import (CollocationGrid, NewtonConfig, SimpleDAE,
                             cobyla_like_minimize, integrate_index1,
                             latin_hypercube, least_squares_multistart,
                             newton_solve, radau_nodes, radau_weights,
                             solve_bvp)


class TestNewton:
    def test_scalar_sqrt2(self):
        res = newton_solve(lambda x: np.array([x[0] ** 2 - 2.0]),
                           lambda x: np.array([[2.0 * x[0]]]),
                           np.array([1.0]), NewtonConfig(tol=1e-13))
        assert res.converged
        assert res.x[0] == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_linear_one_iteration(self):
        A = np.array([[2.0, 1.0], [1.0, 3.0]])
        b = np.array([1.0, 2.0])
        res = newton_solve(lambda x: A @ x - b, lambda x: A, np.zeros(2))
        assert res.converged and res.iterations <= 1
        assert np.allclose(res.x, np.linalg.solve(A, b), atol=1e-12)

    def test_rosenbrock_gradient_root(self):
        def grad(v):
            x, y = v
            return np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])

        def hess(v):
            x, y = v
            return np.array([[2 - 400 * (y - 3 * x * x), -400 * x], [-400 * x, 200.0]])

        res = newton_solve(grad, hess, np.zeros(2), NewtonConfig(tol=1e-12, max_iter=200))
        assert res.converged
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-8)
        assert np.max(np.abs(grad(res.x))) <= 1e-8

    def test_quadratic_convergence_rate(self):
        # errors over the last iterations shrink superlinearly
        errs = []
        x = np.array([1.2])
        for _ in range(6):
            x = x - (x**2 - 2.0) / (2.0 * x)
            errs.append(abs(x[0] - math.sqrt(2)))
        ratios = [errs[k + 1] / errs[k] for k in range(3) if errs[k] > 1e-15]
        assert all(r2 < r1 for r1, r2 in zip(ratios, ratios[1:]))

    def test_nonconvergence_returns_best(self):
        res = newton_solve(lambda x: np.array([np.sign(x[0]) * np.sqrt(abs(x[0])) + 1e3]),
                           lambda x: np.array([[1.0]]), np.array([0.5]),
                           NewtonConfig(tol=1e-14, max_iter=3))
        assert not res.converged
        assert np.isfinite(res.residual_norm)

    def test_singular_jacobian(self):
        with pytest.raises(solver.SingularJacobianError):
            newton_solve(lambda x: np.array([1.0 + x[0] * 0]),
                         lambda x: np.array([[0.0]]), np.array([1.0]))


class TestRadau:
    def test_three_point_nodes(self):
        nodes = radau_nodes(3)
        s6 = math.sqrt(6.0)
        assert np.allclose(nodes, [(4 - s6) / 10, (4 + s6) / 10, 1.0], atol=1e-13)

    def test_one_and_two_point(self):
        assert np.allclose(radau_nodes(1), [1.0])
        assert np.allclose(radau_nodes(2), [1.0 / 3.0, 1.0], atol=1e-13)

    @pytest.mark.parametrize("s", [1, 2, 3, 4])
    def test_quadrature_exactness(self, s):
        nodes, w = radau_nodes(s), radau_weights(s)
        for deg in range(2 * s - 1):  # exact through degree 2s-2
            got = float(np.sum(w * nodes**deg))
            assert got == pytest.approx(1.0 / (deg + 1), rel=1e-12), deg

    def test_diff_matrix_differentiates_polynomials(self):
        nodes = radau_nodes(3)
        allpts = np.concatenate([[0.0], nodes])
        D = solver.diff_matrix(allpts, nodes)
        for deg in range(4):
            vals = allpts**deg
            expect = deg * nodes ** max(deg - 1, 0) if deg > 0 else np.zeros(3)
            assert np.allclose(D @ vals, expect, atol=1e-11)


class TestIntegrate:
    def decay(self):
        return SimpleDAE(1, 0, lambda t, xi, a: -xi, lambda t, xi, a: np.empty(0))

    def test_exponential_decay(self):
        sol = integrate_index1(self.decay(), (0.0, 1.0), [1.0], [],
                               CollocationGrid(12, 3))
        assert sol.final_xi[0] == pytest.approx(math.exp(-1.0), abs=1e-8)

    def test_index1_sine(self):
        dae = SimpleDAE(1, 1, lambda t, xi, a: a.copy(),
                        lambda t, xi, a: a - math.cos(t))
        sol = integrate_index1(dae, (0.0, 1.0), [0.0], [1.0], CollocationGrid(12, 3))
        assert sol.final_xi[0] == pytest.approx(math.sin(1.0), abs=1e-8)

    def test_order_check(self):
        # halving the element size gains at least a factor 16
        errs = []
        for n_el in (6, 12):
            sol = integrate_index1(self.decay(), (0.0, 1.0), [1.0], [],
                                   CollocationGrid(n_el, 3))
            errs.append(abs(sol.final_xi[0] - math.exp(-1.0)))
        assert errs[0] / errs[1] >= 16.0

    def test_algebraic_residual_kept_small(self):
        dae = SimpleDAE(1, 1, lambda t, xi, a: a.copy(),
                        lambda t, xi, a: a - np.exp(-t) * xi)
        sol = integrate_index1(dae, (0.0, 2.0), [1.0], [1.0], CollocationGrid(8, 3),
                               newton=NewtonConfig(tol=1e-12))
        for k in range(8):
            for c in range(3):
                t = sol.stage_times[k, c]
                g = dae.g(t, sol.xi_stages[k, c], sol.alg_stages[k, c])
                assert abs(g[0]) <= 1e-11

    def test_inconsistent_initial_state(self):
        dae = SimpleDAE(1, 1, lambda t, xi, a: a.copy(),
                        lambda t, xi, a: a - 1.0)
        with pytest.raises(solver.InconsistentStateError):
            integrate_index1(dae, (0.0, 1.0), [0.0], [2.0])

    def test_reported_times_and_interpolation(self):
        sol = integrate_index1(self.decay(), (0.0, 1.0), [1.0], [], CollocationGrid(4, 3))
        times = sol.times()
        assert times[0] == 0.0 and times[-1] == pytest.approx(1.0)
        assert len(times) == 1 + 4 * 3
        # interior interpolant accuracy is O(h^4), not superconvergent
        for t in (0.1, 0.37, 0.9):
            assert sol.xi_at(t)[0] == pytest.approx(math.exp(-t), abs=1e-5)


class TestSolveBvp:
    def test_linear_toy(self):
        # y' = z, 0 = z - 1, y(0) = 0, y(1) = 1 -> y(t) = t exactly
        class Toy:
            nxi, nalg = 1, 1
            has_path = False

            def f(self, t, xi, a):
                return a.copy()

            def g(self, t, xi, a):
                return a - 1.0

            def bc(self, xi0, xiT, p0, pT):
                return np.array([xi0[0] - 0.0, xiT[0] - 1.0])

        res = solve_bvp(Toy(), (0.0, 1.0), np.zeros(1), np.ones(1),
                        CollocationGrid(4, 3), tol=1e-11)
        assert np.max(np.abs(res.bc_residual)) <= 1e-10
        sol = res.solution
        for t in (0.25, 0.5, 0.9):
            assert sol.xi_at(t)[0] == pytest.approx(t, abs=1e-9)

    def test_underdetermined_picks_near_guess(self):
        # y' = z with only terminal condition: infinitely many solutions;
        # min-norm steps stay near the initial guess z = 0, y = const
        class Toy:
            nxi, nalg = 1, 1
            has_path = False

            def f(self, t, xi, a):
                return a.copy()

            def g(self, t, xi, a):
                return np.zeros(1) * a  # no constraint at all on z

            def bc(self, xi0, xiT, p0, pT):
                return np.array([xiT[0] - 0.5])

        res = solve_bvp(Toy(), (0.0, 1.0), np.full(1, 0.5), np.zeros(1),
                        CollocationGrid(3, 3), tol=1e-10)
        assert abs(res.bc_residual[0]) <= 1e-9


class TestCobyla:
    def test_unconstrained_interior(self):
        res = cobyla_like_minimize(lambda x: (x[0] - 1.0) ** 2, [],
                                   (np.array([0.0]), np.array([10.0])),
                                   np.array([3.0]), tol=0.0, rho_end=1e-9)
        assert res.x[0] == pytest.approx(1.0, abs=1e-6)

    def test_active_constraint(self):
        res = cobyla_like_minimize(lambda x: x[0], [lambda x: x[0] - 2.0],
                                   (np.array([-10.0]), np.array([10.0])),
                                   np.array([5.0]), tol=0.0, rho_end=1e-9)
        assert res.x[0] == pytest.approx(2.0, abs=1e-6)

    def test_simplex_quadratic(self):
        target = np.array([0.7, 0.2, 0.1])

        def fun(xh):
            x = np.array([xh[0], xh[1], 1.0 - xh[0] - xh[1]])
            return float(np.sum((x - target) ** 2))

        res = cobyla_like_minimize(fun, [lambda xh: 1.0 - xh[0] - xh[1]],
                                   (np.zeros(2), np.ones(2)),
                                   np.array([1 / 3, 1 / 3]), tol=0.0, rho_end=1e-9)
        assert np.allclose(res.x, target[:2], atol=1e-5)


class TestMultistart:
    def test_linear_single_cluster(self):
        A = np.array([[1.0, 2.0], [3.0, 1.0], [1.0, -1.0]])
        b = np.array([1.0, 2.0, 0.3])
        sol = np.linalg.lstsq(A, b, rcond=None)[0]
        minima, failed = least_squares_multistart(
            lambda th: A @ th - b, (np.full(2, -5.0), np.full(2, 5.0)),
            n_starts=20, seed=1)
        assert failed == 0
        assert len(minima) == 1
        assert np.allclose(minima[0].theta, sol, atol=1e-6)

    def test_double_well(self):
        minima, _ = least_squares_multistart(
            lambda th: np.array([th[0] ** 2 - 1.0]),
            (np.array([-3.0]), np.array([3.0])), n_starts=20, seed=2)
        roots = sorted(m.theta[0] for m in minima if m.sse < 1e-16)
        assert np.allclose(roots, [-1.0, 1.0], atol=1e-6)

    def test_latin_hypercube_deterministic(self):
        a = latin_hypercube(10, np.zeros(3), np.ones(3), seed=5)
        b = latin_hypercube(10, np.zeros(3), np.ones(3), seed=5)
        assert np.array_equal(a, b)
        # one sample per stratum in every dimension
        for k in range(3):
            assert np.array_equal(np.sort(np.floor(a[:, k] * 10)), np.arange(10))

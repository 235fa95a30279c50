"""Numerical kernels: damped Newton, Radau collocation, BVP, optimizers.

The integrator discretizes semi-explicit index-1 DAEs with Lagrange-Radau
collocation on finite elements and marches element by element, each element
solved by a damped Newton iteration with chord-style Jacobian reuse.  The
boundary-value solver keeps the whole horizon as one sparse system and
drives it to feasibility with damped Gauss-Newton minimum-norm steps
(J Jt + lambda I solved by SuperLU), which mirrors a dummy-objective
feasibility solve.  The derivative-free optimizer is a linear-approximation
trust-region method in the COBYLA family; the estimation driver is a
multistart damped Levenberg-Marquardt with deduplication.

Everything here is replay-deterministic: fixed iteration order, explicit
seeds, no wall-clock dependence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.linalg import splu

from .column import DegenerateStateError

logger = logging.getLogger(__name__)

PIVOT_THRESHOLD = 1e-14


class SingularJacobianError(RuntimeError):
    """LU pivot below threshold."""


class StepFailureError(RuntimeError):
    """An integration element failed to converge."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class InconsistentStateError(ValueError):
    """Initial algebraic residual too large for integration."""


class BvpInfeasibleError(RuntimeError):
    def __init__(self, message: str, max_residual: float, max_bound_violation: float):
        super().__init__(message)
        self.max_residual = max_residual
        self.max_bound_violation = max_bound_violation


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 40
    min_damping: float = 2.0**-24

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter >= 1")


@dataclass
class NewtonResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual_norm: float


def lu_factor_checked(A: np.ndarray):
    lu, piv = sla.lu_factor(A, check_finite=False)
    bad = np.abs(np.diag(lu)) < PIVOT_THRESHOLD
    if bad.any():
        raise SingularJacobianError(
            f"LU pivot below {PIVOT_THRESHOLD:g} at position {int(np.argmax(bad))}")
    return lu, piv


def newton_solve(F: Callable, J: Callable, x0, cfg: NewtonConfig = NewtonConfig()) -> NewtonResult:
    """Damped Newton for F(x) = 0 with analytic Jacobian J(x).

    Converges when the residual infinity norm drops below cfg.tol; on
    non-convergence the best iterate is returned with converged=False.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    r = np.atleast_1d(F(x))
    best = NewtonResult(x.copy(), False, 0, float(np.max(np.abs(r))))
    for it in range(1, cfg.max_iter + 1):
        norm = float(np.max(np.abs(r)))
        if norm < best.residual_norm:
            best = NewtonResult(x.copy(), False, it - 1, norm)
        if norm <= cfg.tol:
            return NewtonResult(x, True, it - 1, norm)
        lu, piv = lu_factor_checked(np.atleast_2d(J(x)))
        step = sla.lu_solve((lu, piv), -r, check_finite=False)
        alpha = 1.0
        while True:
            x_new = x + alpha * step
            r_new = np.atleast_1d(F(x_new))
            if np.all(np.isfinite(r_new)) and np.max(np.abs(r_new)) < norm:
                break
            alpha *= 0.5
            if alpha < cfg.min_damping:
                x_new, r_new = x + cfg.min_damping * step, None
                break
        if r_new is None:
            r_new = np.atleast_1d(F(x_new))
        x, r = x_new, r_new
    norm = float(np.max(np.abs(r)))
    if norm <= cfg.tol:
        return NewtonResult(x, True, cfg.max_iter, norm)
    if norm < best.residual_norm:
        best = NewtonResult(x, False, cfg.max_iter, norm)
    return best


# ---------------------------------------------------------------------------
# Radau collocation machinery


def radau_nodes(s: int) -> np.ndarray:
    """Right-endpoint Radau nodes on (0, 1]: roots of P_s(2c-1) - P_{s-1}(2c-1)."""
    if s < 1:
        raise ValueError("need at least one collocation point")
    if s == 1:
        return np.array([1.0])
    coeffs = np.zeros(s + 1)
    coeffs[s] = 1.0
    coeffs[s - 1] = -1.0
    roots = np.polynomial.legendre.legroots(coeffs)
    nodes = np.sort((np.real(roots) + 1.0) / 2.0)
    nodes[-1] = 1.0
    return nodes


def _lagrange_basis(nodes: np.ndarray) -> list[np.polynomial.Polynomial]:
    polys = []
    for m, tm in enumerate(nodes):
        p = np.polynomial.Polynomial([1.0])
        for k, tk in enumerate(nodes):
            if k != m:
                p *= np.polynomial.Polynomial([-tk, 1.0]) / (tm - tk)
        polys.append(p)
    return polys


def radau_weights(s: int) -> np.ndarray:
    """Quadrature weights on [0, 1] for the Radau nodes (exact to degree 2s-2)."""
    nodes = radau_nodes(s)
    return np.array([p.integ()(1.0) - p.integ()(0.0) for p in _lagrange_basis(nodes)])


def diff_matrix(nodes_with_start: np.ndarray, eval_points: np.ndarray) -> np.ndarray:
    """D[c, m] = derivative of the m-th Lagrange basis at eval point c."""
    basis = _lagrange_basis(nodes_with_start)
    return np.array([[p.deriv()(t) for p in basis] for t in eval_points])


@dataclass(frozen=True)
class CollocationGrid:
    """Lagrange-Radau discretization: elements x collocation points."""

    n_finite_elements: int = 12
    n_collocation_points: int = 3

    def __post_init__(self):
        if self.n_finite_elements < 1 or self.n_collocation_points < 1:
            raise ValueError("need at least one element and one collocation point")

    @property
    def nodes(self) -> np.ndarray:
        return radau_nodes(self.n_collocation_points)

    @property
    def D(self) -> np.ndarray:
        nodes = self.nodes
        return diff_matrix(np.concatenate([[0.0], nodes]), nodes)


def lagrange_eval(nodes: np.ndarray, values: np.ndarray, t: float) -> np.ndarray:
    """Evaluate the interpolating polynomial through (nodes, values) at t.

    values has shape (len(nodes), ...); barycentric-free direct form is fine
    for the handful of nodes used here.
    """
    out = np.zeros_like(values[0], dtype=float)
    for m, tm in enumerate(nodes):
        w = 1.0
        for k, tk in enumerate(nodes):
            if k != m:
                w *= (t - tk) / (tm - tk)
        out = out + w * values[m]
    return out


# ---------------------------------------------------------------------------
# semi-explicit DAE integration


@dataclass
class SimpleDAE:
    """Adapter for small test systems; Jacobians fall back to differences."""

    nxi: int
    nalg: int
    f: Callable
    g: Callable
    jac: Callable | None = None
    xi_scale: np.ndarray | None = None
    alg_scale: np.ndarray | None = None
    f_scale: np.ndarray | None = None
    g_scale: np.ndarray | None = None


def _dae_scales(dae):
    nxi, nalg = dae.nxi, dae.nalg
    xi_s = getattr(dae, "xi_scale", None)
    alg_s = getattr(dae, "alg_scale", None)
    f_s = getattr(dae, "f_scale", None)
    g_s = getattr(dae, "g_scale", None)
    return (np.ones(nxi) if xi_s is None else np.asarray(xi_s, float),
            np.ones(nalg) if alg_s is None else np.asarray(alg_s, float),
            np.ones(nxi) if f_s is None else np.asarray(f_s, float),
            np.ones(nalg) if g_s is None else np.asarray(g_s, float))


def _dae_jac(dae, t, xi, alg):
    jac = getattr(dae, "jac", None)
    if jac is not None:
        return jac(t, xi, alg)
    # forward differences, adequate for the toy systems that omit jac
    nxi, nalg = dae.nxi, dae.nalg
    f0, g0 = np.atleast_1d(dae.f(t, xi, alg)), np.atleast_1d(dae.g(t, xi, alg))
    Jf_xi = np.zeros((nxi, nxi)); Jf_a = np.zeros((nxi, nalg))
    Jg_xi = np.zeros((nalg, nxi)); Jg_a = np.zeros((nalg, nalg))
    for k in range(nxi):
        h = 1e-7 * max(1.0, abs(xi[k]))
        xp = xi.copy(); xp[k] += h
        Jf_xi[:, k] = (np.atleast_1d(dae.f(t, xp, alg)) - f0) / h
        if nalg:
            Jg_xi[:, k] = (np.atleast_1d(dae.g(t, xp, alg)) - g0) / h
    for k in range(nalg):
        h = 1e-7 * max(1.0, abs(alg[k]))
        ap = alg.copy(); ap[k] += h
        Jf_a[:, k] = (np.atleast_1d(dae.f(t, xi, ap)) - f0) / h
        Jg_a[:, k] = (np.atleast_1d(dae.g(t, xi, ap)) - g0) / h
    return Jf_xi, Jf_a, Jg_xi, Jg_a


@dataclass
class CollocationSolution:
    """Discretized trajectory on the collocation grid.

    Stage arrays are (n_elements, s, dim); element k spans
    [element_starts[k], element_starts[k+1]] and its stage times include
    the right endpoint (Radau).
    """

    t0: float
    element_starts: np.ndarray
    nodes: np.ndarray
    stage_times: np.ndarray
    xi_starts: np.ndarray
    xi_stages: np.ndarray
    alg_stages: np.ndarray
    alg0: np.ndarray

    def times(self) -> np.ndarray:
        """Reported grid: element boundaries plus all collocation points."""
        return np.concatenate([[self.t0], self.stage_times.ravel()])

    def xi_series(self) -> np.ndarray:
        return np.vstack([self.xi_starts[0][None, :],
                          self.xi_stages.reshape(-1, self.xi_stages.shape[-1])])

    def alg_series(self) -> np.ndarray:
        return np.vstack([self.alg0[None, :],
                          self.alg_stages.reshape(-1, self.alg_stages.shape[-1])])

    def _locate(self, t: float) -> int:
        k = int(np.searchsorted(self.element_starts[1:-1], t, side="right"))
        return min(max(k, 0), len(self.element_starts) - 2)

    def xi_at(self, t: float) -> np.ndarray:
        k = self._locate(t)
        h = self.element_starts[k + 1] - self.element_starts[k]
        tau = (t - self.element_starts[k]) / h
        nodes = np.concatenate([[0.0], self.nodes])
        vals = np.vstack([self.xi_starts[k][None, :], self.xi_stages[k]])
        return lagrange_eval(nodes, vals, tau)

    def alg_at(self, t: float) -> np.ndarray:
        k = self._locate(t)
        h = self.element_starts[k + 1] - self.element_starts[k]
        tau = (t - self.element_starts[k]) / h
        return lagrange_eval(self.nodes, self.alg_stages[k], tau)

    @property
    def final_xi(self) -> np.ndarray:
        return self.xi_stages[-1, -1]

    @property
    def final_alg(self) -> np.ndarray:
        return self.alg_stages[-1, -1]


def _element_residual(dae, t_start, h, nodes, D, xi_prev, Z, scales):
    """Residual of one element; Z is (s, nxi+nalg) stage unknowns."""
    xi_s, alg_s, f_s, g_s = scales
    s = len(nodes)
    nxi, nalg = dae.nxi, dae.nalg
    res = np.empty(s * (nxi + nalg))
    xi_all = np.vstack([xi_prev[None, :], Z[:, :nxi]])
    for c in range(s):
        t_c = t_start + h * nodes[c]
        xi_c = Z[c, :nxi]
        alg_c = Z[c, nxi:]
        dxi = D[c] @ xi_all
        r_f = (dxi - h * np.atleast_1d(dae.f(t_c, xi_c, alg_c))) / xi_s
        r_g = np.atleast_1d(dae.g(t_c, xi_c, alg_c)) / g_s if nalg else np.empty(0)
        res[c * (nxi + nalg):c * (nxi + nalg) + nxi] = r_f
        res[c * (nxi + nalg) + nxi:(c + 1) * (nxi + nalg)] = r_g
    return res


def _element_jacobian(dae, t_start, h, nodes, D, Z, scales):
    """Scaled dense Jacobian of the element residual w.r.t. scaled unknowns."""
    xi_s, alg_s, f_s, g_s = scales
    s = len(nodes)
    nxi, nalg = dae.nxi, dae.nalg
    dim = s * (nxi + nalg)
    J = np.zeros((dim, dim))
    for c in range(s):
        t_c = t_start + h * nodes[c]
        xi_c = Z[c, :nxi]
        alg_c = Z[c, nxi:]
        Jf_xi, Jf_a, Jg_xi, Jg_a = _dae_jac(dae, t_c, xi_c, alg_c)
        r0 = c * (nxi + nalg)
        # collocation rows: D-coupling to every stage's xi block
        eye = np.eye(nxi)
        for m in range(s):
            c0 = m * (nxi + nalg)
            J[r0:r0 + nxi, c0:c0 + nxi] += D[c, m + 1] * eye
        c0 = c * (nxi + nalg)
        J[r0:r0 + nxi, c0:c0 + nxi] -= h * Jf_xi * (xi_s[None, :] / xi_s[:, None])
        if nalg:
            J[r0:r0 + nxi, c0 + nxi:c0 + nxi + nalg] = \
                -h * Jf_a * (alg_s[None, :] / xi_s[:, None])
            J[r0 + nxi:r0 + nxi + nalg, c0:c0 + nxi] = \
                Jg_xi * (xi_s[None, :] / g_s[:, None])
            J[r0 + nxi:r0 + nxi + nalg, c0 + nxi:c0 + nxi + nalg] = \
                Jg_a * (alg_s[None, :] / g_s[:, None])
    return J


def integrate_index1(dae, interval: tuple[float, float], xi0, alg0,
                     grid: CollocationGrid = CollocationGrid(),
                     newton: NewtonConfig = NewtonConfig(tol=1e-10, max_iter=25),
                     consistency_tol: float = 1e-6) -> CollocationSolution:
    """March a semi-explicit index-1 DAE over the interval, element by element.

    The initial state must be consistent (scaled algebraic residual below
    consistency_tol).  Each element's collocation system is solved by damped
    Newton with chord-style Jacobian reuse; a failure raises StepFailureError
    carrying the element start time.
    """
    t0, t1 = interval
    xi0 = np.atleast_1d(np.asarray(xi0, float)).copy()
    alg0 = np.atleast_1d(np.asarray(alg0, float)).copy()
    scales = _dae_scales(dae)
    xi_s, alg_s, f_s, g_s = scales
    nxi, nalg = dae.nxi, dae.nalg
    if nalg:
        g0 = np.max(np.abs(np.atleast_1d(dae.g(t0, xi0, alg0)) / g_s))
        if g0 > consistency_tol:
            raise InconsistentStateError(
                f"initial algebraic residual {g0:.3g} exceeds {consistency_tol:g}")

    n_el = grid.n_finite_elements
    s = grid.n_collocation_points
    nodes, D = grid.nodes, grid.D
    h = (t1 - t0) / n_el
    el_starts = t0 + h * np.arange(n_el + 1)

    xi_starts = np.empty((n_el + 1, nxi))
    xi_stages = np.empty((n_el, s, nxi))
    alg_stages = np.empty((n_el, s, nalg))
    stage_times = np.empty((n_el, s))
    xi_starts[0] = xi0

    var_scale = np.concatenate([xi_s, alg_s])
    Z = np.tile(np.concatenate([xi0, alg0]), (s, 1))
    for k in range(n_el):
        t_start = el_starts[k]
        stage_times[k] = t_start + h * nodes
        xi_prev = xi_starts[k]

        def resid(zflat):
            return _element_residual(dae, t_start, h, nodes, D, xi_prev,
                                     zflat.reshape(s, -1), scales)

        z = Z.ravel().copy()
        try:
            r = resid(z)
        except DegenerateStateError as exc:
            raise StepFailureError(f"degenerate warm start at t={t_start:g}: {exc}", t_start)
        lu = piv = None
        converged = False
        for it in range(newton.max_iter):
            norm = float(np.max(np.abs(r)))
            if norm <= newton.tol:
                converged = True
                break
            if lu is None:
                J = _element_jacobian(dae, t_start, h, nodes, D, z.reshape(s, -1), scales)
                try:
                    lu, piv = lu_factor_checked(J)
                except SingularJacobianError as exc:
                    raise StepFailureError(f"singular element Jacobian at t={t_start:g}: {exc}", t_start)
            step = sla.lu_solve((lu, piv), -r, check_finite=False)
            step_unscaled = np.tile(var_scale, s) * step
            alpha = 1.0
            accepted = False
            while alpha >= newton.min_damping:
                try:
                    r_new = resid(z + alpha * step_unscaled)
                except DegenerateStateError:
                    alpha *= 0.5
                    continue
                if np.all(np.isfinite(r_new)) and np.max(np.abs(r_new)) < norm:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                if lu is not None and it > 0:
                    lu = None  # refresh the Jacobian and retry
                    continue
                raise StepFailureError(
                    f"element Newton stalled at t={t_start:g} (residual {norm:.3g})", t_start)
            z = z + alpha * step_unscaled
            # chord: keep the factorization while convergence is fast
            if np.max(np.abs(r_new)) > 0.3 * norm or alpha < 1.0:
                lu = None
            r = r_new
        if not converged and float(np.max(np.abs(r))) > newton.tol:
            raise StepFailureError(
                f"element at t={t_start:g} not converged "
                f"(residual {float(np.max(np.abs(r))):.3g})", t_start)
        Zsol = z.reshape(s, -1)
        xi_stages[k] = Zsol[:, :nxi]
        alg_stages[k] = Zsol[:, nxi:]
        xi_starts[k + 1] = Zsol[-1, :nxi]
        # warm start for the next element: constant continuation of the endpoint
        Z = np.tile(Zsol[-1], (s, 1))

    return CollocationSolution(t0, el_starts, nodes, stage_times,
                               xi_starts, xi_stages, alg_stages, alg0)


# ---------------------------------------------------------------------------
# full-discretization boundary-value solving


@dataclass
class BvpSolution:
    solution: CollocationSolution
    path: np.ndarray | None          # free path values: [p(t0), stages...]
    bc_residual: np.ndarray
    residual_norm: float
    iterations: int

    def path_at_stages(self) -> np.ndarray | None:
        return self.path


def solve_bvp(problem, interval: tuple[float, float], xi_guess, alg_guess,
              grid: CollocationGrid = CollocationGrid(),
              path_guess=None,
              tol: float = 1e-9, max_iter: int = 60,
              alg_bounds: tuple[np.ndarray, np.ndarray] | None = None,
              path_bounds: tuple[float, float] | None = None) -> BvpSolution:
    """Solve a two-point BVP for a semi-explicit DAE by full discretization.

    problem provides f/g/jac like the integrator's DAE (with an extra scalar
    path argument when problem.has_path) plus bc(xi0, xiT, p0, pT) -> array.
    xi_guess/alg_guess: either single states (replicated over the grid) or
    callables t -> state.  The system is generally underdetermined; damped
    Gauss-Newton minimum-norm steps converge to a feasible point near the
    initial guess.  Bounds are enforced by projection after each step.
    """
    t0, t1 = interval
    n_el, s = grid.n_finite_elements, grid.n_collocation_points
    nodes, D = grid.nodes, grid.D
    h = (t1 - t0) / n_el
    el_starts = t0 + h * np.arange(n_el + 1)
    nxi, nalg = problem.nxi, problem.nalg
    has_path = getattr(problem, "has_path", False)
    xi_s, alg_s, f_s, g_s = _dae_scales(problem)
    bc_scale = np.asarray(getattr(problem, "bc_scale", None), float) \
        if getattr(problem, "bc_scale", None) is not None else None

    def guess_at(guess, t, dim):
        if callable(guess):
            return np.atleast_1d(np.asarray(guess(t), float))
        return np.atleast_1d(np.asarray(guess, float))

    # unknown layout: [xi0; p0?; per (k,c): xi, alg, p?]
    blk = nxi + nalg + (1 if has_path else 0)
    n_unknown = nxi + (1 if has_path else 0) + n_el * s * blk
    z = np.empty(n_unknown)
    z[:nxi] = guess_at(xi_guess, t0, nxi)
    off0 = nxi
    if has_path:
        z[nxi] = float(path_guess(t0)) if callable(path_guess) else 0.0
        off0 = nxi + 1
    stage_offsets = np.empty((n_el, s), dtype=int)
    for k in range(n_el):
        for c in range(s):
            o = off0 + (k * s + c) * blk
            stage_offsets[k, c] = o
            t_c = el_starts[k] + h * nodes[c]
            z[o:o + nxi] = guess_at(xi_guess, t_c, nxi)
            z[o + nxi:o + nxi + nalg] = guess_at(alg_guess, t_c, nalg)
            if has_path:
                z[o + nxi + nalg] = float(path_guess(t_c)) if callable(path_guess) else 0.0

    n_rows = n_el * s * (nxi + nalg)
    var_scale = np.ones(n_unknown)
    var_scale[:nxi] = xi_s
    for k in range(n_el):
        for c in range(s):
            o = stage_offsets[k, c]
            var_scale[o:o + nxi] = xi_s
            var_scale[o + nxi:o + nxi + nalg] = alg_s

    lo = np.full(n_unknown, -np.inf)
    hi = np.full(n_unknown, np.inf)
    if alg_bounds is not None:
        for k in range(n_el):
            for c in range(s):
                o = stage_offsets[k, c]
                lo[o + nxi:o + nxi + nalg] = alg_bounds[0]
                hi[o + nxi:o + nxi + nalg] = alg_bounds[1]
    if has_path and path_bounds is not None:
        lo[nxi] = path_bounds[0]
        hi[nxi] = path_bounds[1]
        for k in range(n_el):
            for c in range(s):
                o = stage_offsets[k, c]
                lo[o + nxi + nalg] = path_bounds[0]
                hi[o + nxi + nalg] = path_bounds[1]

    def split(zv):
        xi0_v = zv[:nxi]
        p0_v = zv[nxi] if has_path else None
        return xi0_v, p0_v

    def call_f(t, xi, alg, p):
        return problem.f(t, xi, alg, p) if has_path else problem.f(t, xi, alg)

    def call_g(t, xi, alg, p):
        return problem.g(t, xi, alg, p) if has_path else problem.g(t, xi, alg)

    def residual(zv):
        res = np.empty(n_rows)
        xi0_v, p0_v = split(zv)
        row = 0
        for k in range(n_el):
            xi_prev = xi0_v if k == 0 else zv[stage_offsets[k - 1, s - 1]:
                                              stage_offsets[k - 1, s - 1] + nxi]
            xi_all = [xi_prev] + [zv[stage_offsets[k, c]:stage_offsets[k, c] + nxi]
                                  for c in range(s)]
            for c in range(s):
                o = stage_offsets[k, c]
                t_c = el_starts[k] + h * nodes[c]
                xi_c = zv[o:o + nxi]
                alg_c = zv[o + nxi:o + nxi + nalg]
                p_c = zv[o + nxi + nalg] if has_path else None
                dxi = sum(D[c, m] * xi_all[m] for m in range(s + 1))
                res[row:row + nxi] = (dxi - h * np.atleast_1d(call_f(t_c, xi_c, alg_c, p_c))) / xi_s
                row += nxi
                if nalg:
                    res[row:row + nalg] = np.atleast_1d(call_g(t_c, xi_c, alg_c, p_c)) / g_s
                row += nalg
        xiT = zv[stage_offsets[-1, -1]:stage_offsets[-1, -1] + nxi]
        pT = zv[stage_offsets[-1, -1] + nxi + nalg] if has_path else None
        bc = np.atleast_1d(problem.bc(xi0_v, xiT, p0_v, pT))
        if bc_scale is not None:
            bc = bc / bc_scale
        return np.concatenate([res, bc])

    def jacobian(zv):
        # assembled as d(scaled residual)/d(raw variable); the column scaling
        # var_scale is applied once at the end
        rows, cols, vals = [], [], []
        xi0_v, p0_v = split(zv)
        row = 0

        def put(r0, c0, block):
            b = np.atleast_2d(block)
            rr, cc = np.nonzero(b)
            rows.extend((r0 + rr).tolist())
            cols.extend((c0 + cc).tolist())
            vals.extend(b[rr, cc].tolist())

        inv_xi = 1.0 / xi_s
        for k in range(n_el):
            prev_off = 0 if k == 0 else stage_offsets[k - 1, s - 1]
            for c in range(s):
                o = stage_offsets[k, c]
                t_c = el_starts[k] + h * nodes[c]
                xi_c = zv[o:o + nxi]
                alg_c = zv[o + nxi:o + nxi + nalg]
                p_c = zv[o + nxi + nalg] if has_path else None
                if has_path:
                    Jf_xi, Jf_a, Jg_xi, Jg_a, f_p, g_p = problem.jac(t_c, xi_c, alg_c, p_c)
                else:
                    Jf_xi, Jf_a, Jg_xi, Jg_a = _dae_jac(problem, t_c, xi_c, alg_c)
                    f_p = g_p = None
                # collocation rows
                put(row, prev_off, D[c, 0] * np.diag(inv_xi))
                for m in range(s):
                    put(row, stage_offsets[k, m], D[c, m + 1] * np.diag(inv_xi))
                put(row, o, -h * Jf_xi / xi_s[:, None])
                if nalg:
                    put(row, o + nxi, -h * Jf_a / xi_s[:, None])
                if has_path:
                    put(row, o + nxi + nalg, (-h * np.atleast_1d(f_p) / xi_s)[:, None])
                row += nxi
                if nalg:
                    put(row, o, Jg_xi / g_s[:, None])
                    put(row, o + nxi, Jg_a / g_s[:, None])
                    if has_path:
                        put(row, o + nxi + nalg, (np.atleast_1d(g_p) / g_s)[:, None])
                    row += nalg
        # boundary rows by finite differences over their few arguments
        oT = stage_offsets[-1, -1]
        xiT = zv[oT:oT + nxi]
        pT = zv[oT + nxi + nalg] if has_path else None

        def bc_eval(x0, xT, p0, pT_):
            bc = np.atleast_1d(problem.bc(x0, xT, p0, pT_))
            return bc / bc_scale if bc_scale is not None else bc

        bc0 = bc_eval(xi0_v, xiT, p0_v, pT)
        nbc = len(bc0)
        for k in range(nxi):
            hstep = 1e-7 * xi_s[k]
            xp = xi0_v.copy(); xp[k] += hstep
            put(row, k, ((bc_eval(xp, xiT, p0_v, pT) - bc0) / hstep)[:, None])
            xq = xiT.copy(); xq[k] += hstep
            put(row, oT + k, ((bc_eval(xi0_v, xq, p0_v, pT) - bc0) / hstep)[:, None])
        if has_path:
            hstep = 1e-7
            put(row, nxi, ((bc_eval(xi0_v, xiT, p0_v + hstep, pT) - bc0) / hstep)[:, None])
            put(row, oT + nxi + nalg, ((bc_eval(xi0_v, xiT, p0_v, pT + hstep) - bc0) / hstep)[:, None])
        row += nbc
        J = sp.coo_matrix((vals, (rows, cols)), shape=(row, n_unknown))
        return (J.tocsr().multiply(sp.csr_matrix(var_scale[None, :]))).tocsr(), bc0

    F = residual(z)
    norm = float(np.max(np.abs(F)))
    it = 0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            break
        J, _ = jacobian(z)
        JJt = (J @ J.T).tocsc()
        lam = 1e-12 * max(1.0, float(JJt.diagonal().max()))
        JJt = JJt + lam * sp.identity(JJt.shape[0], format="csc")
        try:
            w = splu(JJt).solve(-F)
        except RuntimeError as exc:
            raise BvpInfeasibleError(f"normal-equation factorization failed: {exc}",
                                     norm, 0.0)
        step = var_scale * (J.T @ w)
        alpha, accepted = 1.0, False
        while alpha >= 2.0**-16:
            z_try = np.clip(z + alpha * step, lo, hi)
            try:
                F_try = residual(z_try)
            except DegenerateStateError:
                alpha *= 0.5
                continue
            if np.all(np.isfinite(F_try)) and np.max(np.abs(F_try)) < norm:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        z, F = z_try, F_try
        norm = float(np.max(np.abs(F)))
    if norm > tol:
        viol = float(np.max(np.maximum(lo - z, 0) + np.maximum(z - hi, 0)))
        raise BvpInfeasibleError(
            f"BVP not converged: residual {norm:.3g} after {it} iterations", norm, viol)

    # unpack into a CollocationSolution
    xi_starts = np.empty((n_el + 1, nxi))
    xi_stages = np.empty((n_el, s, nxi))
    alg_stages = np.empty((n_el, s, nalg))
    stage_times = np.empty((n_el, s))
    xi_starts[0] = z[:nxi]
    for k in range(n_el):
        stage_times[k] = el_starts[k] + h * nodes
        for c in range(s):
            o = stage_offsets[k, c]
            xi_stages[k, c] = z[o:o + nxi]
            alg_stages[k, c] = z[o + nxi:o + nxi + nalg]
        xi_starts[k + 1] = xi_stages[k, -1]
    path = None
    if has_path:
        path = np.empty(1 + n_el * s)
        path[0] = z[nxi]
        for k in range(n_el):
            for c in range(s):
                path[1 + k * s + c] = z[stage_offsets[k, c] + nxi + nalg]
    sol = CollocationSolution(t0, el_starts, nodes, stage_times,
                              xi_starts, xi_stages, alg_stages, alg_stages[0, 0] * 0)
    xiT = xi_stages[-1, -1]
    p0 = path[0] if has_path else None
    pT = path[-1] if has_path else None
    bc_res = np.atleast_1d(problem.bc(xi_starts[0], xiT, p0, pT))
    return BvpSolution(sol, path, bc_res, norm, it)


# ---------------------------------------------------------------------------
# derivative-free constrained minimization (linear-approximation trust region)


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool


def cobyla_like_minimize(objective: Callable, inequality_constraints: Sequence[Callable],
                         x_box: tuple[np.ndarray, np.ndarray], x0,
                         tol: float = 1e-10, rho_begin: float = 0.05,
                         rho_end: float = 1e-8, max_evals: int = 20000) -> MinimizeResult:
    """Derivative-free linear-approximation trust-region minimizer.

    Builds linear models of the objective and the inequality constraints
    (c_k(x) >= 0) from coordinate samples at radius rho, moves within the
    infinity-norm trust region intersected with the box, accepts on actual
    improvement and shrinks rho otherwise.  Stops when the objective drops
    to tol, the trust radius reaches rho_end, or the budget is spent.
    """
    lo, hi = (np.asarray(b, float) for b in x_box)
    x = np.clip(np.asarray(x0, float), lo, hi)
    n = len(x)
    evals = 0

    def feas_violation(xv):
        return sum(max(0.0, -float(c(xv))) for c in inequality_constraints)

    def fval(xv):
        nonlocal evals
        evals += 1
        return float(objective(xv))

    f_x = fval(x)
    rho = rho_begin
    while evals < max_evals:
        if f_x <= tol and feas_violation(x) <= tol:
            return MinimizeResult(x, f_x, evals, True)
        # linear models from coordinate samples
        grad = np.zeros(n)
        cons0 = [float(c(x)) for c in inequality_constraints]
        cons_grad = [np.zeros(n) for _ in inequality_constraints]
        for k in range(n):
            step = rho if x[k] + rho <= hi[k] else -rho
            xp = x.copy()
            xp[k] += step
            grad[k] = (fval(xp) - f_x) / step
            for ci, c in enumerate(inequality_constraints):
                cons_grad[ci][k] = (float(c(xp)) - cons0[ci]) / step
        # trust-region LP: min grad.d  s.t.  cons0 + A d >= 0, |d| <= rho, box
        d_lo = np.maximum(lo - x, -rho)
        d_hi = np.minimum(hi - x, rho)
        A_ub, b_ub = [], []
        for ci in range(len(inequality_constraints)):
            A_ub.append(-cons_grad[ci])
            b_ub.append(cons0[ci])
        res = linprog(grad, A_ub=np.array(A_ub) if A_ub else None,
                      b_ub=np.array(b_ub) if b_ub else None,
                      bounds=list(zip(d_lo, d_hi)), method="highs")
        d = res.x if res.status == 0 and res.x is not None else None
        improved = False
        if d is not None and np.linalg.norm(d, np.inf) > 1e-15:
            x_new = np.clip(x + d, lo, hi)
            f_new = fval(x_new)
            v_new, v_old = feas_violation(x_new), feas_violation(x)
            if (v_new < v_old - 1e-14) or (v_new <= v_old + 1e-14 and f_new < f_x):
                x, f_x = x_new, f_new
                improved = True
        if not improved:
            rho *= 0.5
            if rho < rho_end:
                return MinimizeResult(x, f_x, evals, True)
    return MinimizeResult(x, f_x, evals, False)


# ---------------------------------------------------------------------------
# multistart damped least squares


@dataclass
class LocalMinimum:
    theta: np.ndarray
    sse: float
    grad_norm: float
    iterations: int


def latin_hypercube(n: int, lo: np.ndarray, hi: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic Latin-hypercube sample of n points in the box."""
    rng = np.random.default_rng(seed)
    d = len(lo)
    out = np.empty((n, d))
    for k in range(d):
        strata = (np.arange(n) + rng.uniform(size=n)) / n
        out[:, k] = lo[k] + (hi[k] - lo[k]) * rng.permutation(strata)
    return out


def lm_minimize(residual_map: Callable, theta0, scale: np.ndarray,
                box: tuple[np.ndarray, np.ndarray] | None = None,
                grad_tol: float = 1e-10, max_iter: int = 200) -> LocalMinimum:
    """Damped Levenberg-Marquardt with finite-difference Jacobian."""
    th = np.asarray(theta0, float).copy()
    lo, hi = (None, None) if box is None else box
    if box is not None:
        th = np.clip(th, lo, hi)
    r = np.atleast_1d(residual_map(th))
    f = float(r @ r)
    lam = 1e-3
    it = 0
    n = len(th)
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        J = np.empty((len(r), n))
        for k in range(n):
            hstep = 1e-7 * scale[k]
            tp = th.copy()
            tp[k] += hstep
            J[:, k] = (np.atleast_1d(residual_map(tp)) - r) / hstep
        g = J.T @ r
        grad_norm = float(np.max(np.abs(g * scale)))
        if grad_norm <= grad_tol:
            break
        JtJ = J.T @ J
        diag = np.maximum(np.diag(JtJ), 1e-14)
        moved = False
        for _ in range(40):
            step = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
            th_try = th + step if box is None else np.clip(th + step, lo, hi)
            r_try = np.atleast_1d(residual_map(th_try))
            f_try = float(r_try @ r_try)
            if np.isfinite(f_try) and f_try < f:
                th, r, f = th_try, r_try, f_try
                lam = max(lam / 3.0, 1e-12)
                moved = True
                break
            lam *= 4.0
        if not moved or float(np.max(np.abs(step / scale))) < 1e-13:
            break
    return LocalMinimum(th, f, grad_norm, it)


def least_squares_multistart(residual_map: Callable,
                             parameter_box: tuple[np.ndarray, np.ndarray],
                             n_starts: int = 200, local_tol: float = 1e-10,
                             seed: int = 0, dedup_radius: float = 1e-2,
                             extra_starts: Sequence[np.ndarray] = ()) -> tuple[list[LocalMinimum], int]:
    """Multistart damped Gauss-Newton/LM over a box; deduplicated minima.

    Returns (minima sorted by SSE, number of failed starts).  Deduplication
    uses Euclidean distance in box-half-width-scaled coordinates.
    """
    lo, hi = (np.asarray(b, float) for b in parameter_box)
    scale = 0.5 * (hi - lo)
    starts = list(extra_starts) + list(latin_hypercube(n_starts, lo, hi, seed))
    found: list[LocalMinimum] = []
    failed = 0
    for th0 in starts:
        try:
            res = lm_minimize(residual_map, th0, scale, box=(lo, hi), grad_tol=local_tol)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError):
            failed += 1
            continue
        if not np.isfinite(res.sse):
            failed += 1
            continue
        found.append(res)
    found.sort(key=lambda m: m.sse)
    unique: list[LocalMinimum] = []
    for m in found:
        if all(np.linalg.norm((m.theta - u.theta) / scale) > dedup_radius for u in unique):
            unique.append(m)
    return unique, failed

"""Consistent initialization: stationary infinite reflux plus BVP transition.

The stationary stage profile at total reflux is computed by a sweep up the
column (bubble point per stage, vapor composition carried upward, vapor
streams from the enthalpy-balance ratios) inside a derivative-free outer
iteration that adapts the pot composition until the apparatus holdup and
composition conditions hold.  The transition to the prescribed finite
efflux ratio is a boundary-value problem for the relaxed system on a
negative time horizon with the efflux ratio as a free path variable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import vle as vle_mod
from .column import (ColumnConfig, ColumnModel, ColumnScaling, ControlInput,
                     PerturbationSet, RelaxedBvpProblem)
from .solver import CollocationGrid, solve_bvp
from .vle import ChemSystem

logger = logging.getLogger(__name__)


class ZeroDenominatorError(RuntimeError):
    """A stage enthalpy-difference denominator vanished in the sweep."""


class OuterLoopError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass(frozen=True)
class InitScenario:
    """Initial apparatus conditions and the controls prescribed at t=0."""

    n_app0: float
    x_app0: np.ndarray
    P0: float
    Q0: float
    T_cond0: float
    eps0: float
    t_pre: float = -20.0

    def __post_init__(self):
        x = np.asarray(self.x_app0, float)
        object.__setattr__(self, "x_app0", x)
        if abs(x.sum() - 1.0) > 1e-10 or np.any(x < 0):
            raise ValueError("x_app0 must lie on the probability simplex")
        if self.n_app0 <= 0:
            raise ValueError("n_app0 must be positive")
        if self.t_pre >= 0:
            raise ValueError("t_pre must be negative")

    @classmethod
    def from_scenario(cls, scn) -> "InitScenario":
        u = scn.controls
        return cls(n_app0=scn.n_app0, x_app0=scn.x_app0, P0=u.P, Q0=u.Q,
                   T_cond0=u.T_cond, eps0=u.epsilon, t_pre=scn.t_pre)

    def controls(self, epsilon: float | None = None) -> ControlInput:
        return ControlInput(epsilon=self.eps0 if epsilon is None else epsilon,
                            P=self.P0, Q=self.Q0, T_cond=self.T_cond0)


@dataclass
class StationaryProfile:
    """Total-reflux stationary stage profile (stage index 0 = pot)."""

    x: np.ndarray          # (S, C) liquid compositions
    y: np.ndarray          # (S, C) vapor compositions
    T: np.ndarray          # (S,)  bubble temperatures
    V: np.ndarray          # (S,)  vapor streams
    L: np.ndarray          # (S,)  liquid downflows (L^j = V^j at total reflux)
    n: np.ndarray          # (S,)  holdups; pot entry filled by the outer loop
    H: np.ndarray          # (S,)  stage enthalpies; pot entry likewise

    def pack_state(self, model: ColumnModel) -> tuple[np.ndarray, np.ndarray]:
        """(xi, eta) in the perturbed system's layout."""
        dims = model.dims
        xi = dims.pack_xi(self.n, self.x[:, :-1], self.H)
        eta = dims.pack_eta(self.V, self.y, self.T, self.x[:, -1], self.L[:-1])
        return xi, eta


def inner_loop(sys: ChemSystem, cfg: ColumnConfig, x1, P0: float, Q0: float,
               T_cond0: float,
               bracket: tuple[float, float] | None = None) -> StationaryProfile:
    """Stationary sweep for a given pot composition at total reflux.

    Stage temperatures are bubble points, each stage's liquid matches the
    vapor leaving the stage below, the condenser temperature caps the
    column (T^{S+1} := T_cond0), and the vapor streams follow from the
    stage enthalpy balances.  The pot holdup entry is left at 0 for the
    outer loop to fill.
    """
    S, C = cfg.S, sys.C
    if bracket is None:
        bracket = vle_mod.default_bracket(sys, P0)
    x = np.empty((S, C))
    y = np.empty((S, C))
    T = np.empty(S + 1)
    x[0] = np.asarray(x1, float)
    for j in range(S):
        T[j] = vle_mod.bubble_point_T(sys, P0, x[j], bracket)
        y[j] = vle_mod.y_vle(sys, P0, T[j], x[j])
        if j + 1 < S:
            x[j + 1] = y[j]
    T[S] = T_cond0

    # denominators f_hl(T^{j+1}, y^j) - f_hv(T^j, y^j)
    denom = np.empty(S)
    for j in range(S):
        denom[j] = float(sys.f_hl(T[j + 1], y[j]) - sys.f_hv(T[j], y[j]))
        if denom[j] == 0.0:
            raise ZeroDenominatorError(f"stage {j + 1} enthalpy denominator is zero")
    V = np.empty(S)
    V[0] = -Q0 / denom[0]
    for j in range(1, S):
        V[j] = V[j - 1] * denom[j - 1] / denom[j]
        # the ratio re-expresses f_hl(T^j, y^{j-1}) via x^j = y^{j-1}
    L = V.copy()

    n = np.zeros(S)
    H = np.zeros(S)
    coeff = cfg.holdup.coefficient
    for j in range(1, S):
        n[j] = coeff * L[j - 1]
        H[j] = n[j] * float(sys.f_hl(T[j], x[j]))
    return StationaryProfile(x=x, y=y, T=T[:S], V=V, L=L, n=n, H=H)


@dataclass
class OuterLoopResult:
    profile: StationaryProfile
    residual: float
    history: list[float] = field(default_factory=list)
    n_evals: int = 0


def outer_loop(sys: ChemSystem, cfg: ColumnConfig, scenario: InitScenario,
               x1_guess=None, tol: float = 1e-10,
               penalty: float = 100.0, max_evals: int = 40000) -> OuterLoopResult:
    """Adapt the pot composition until the apparatus conditions hold.

    Minimizes |x_app(x^1) - x_app0|^2 over the simplex (last fraction
    eliminated by substitution), with an additive penalty when the implied
    pot holdup n^1 = n_app0 - sum_{j>=2} n^j turns negative.
    """
    from .solver import cobyla_like_minimize

    C = sys.C
    x_app0 = scenario.x_app0
    if x1_guess is None:
        x1_guess = x_app0.copy()
    history: list[float] = []
    bracket = vle_mod.default_bracket(sys, scenario.P0)

    def build(x1):
        return inner_loop(sys, cfg, x1, scenario.P0, scenario.Q0,
                          scenario.T_cond0, bracket)

    def objective(xh):
        x1 = np.concatenate([xh, [1.0 - xh.sum()]])
        if np.any(x1 < -1e-12):
            return float(np.sum(np.maximum(-x1, 0.0)) * 1e4 + penalty)
        x1 = np.clip(x1, 0.0, 1.0)
        try:
            prof = build(x1)
        except (vle_mod.NoBracketError, vle_mod.BubblePointError, ZeroDenominatorError):
            return 10.0 * penalty
        n1 = scenario.n_app0 - prof.n[1:].sum()
        n_full = prof.n.copy()
        n_full[0] = n1
        x_app = (n_full[:, None] * prof.x).sum(axis=0) / scenario.n_app0
        res = float(np.sum((x_app - x_app0) ** 2))
        history.append(res)
        if n1 >= 0.0:
            return res
        return res + penalty

    result = cobyla_like_minimize(
        objective, [lambda xh: 1.0 - xh.sum()],
        (np.zeros(C - 1), np.ones(C - 1)), np.asarray(x1_guess, float)[:C - 1],
        tol=tol, rho_begin=0.02, rho_end=1e-9, max_evals=max_evals)

    x1 = np.concatenate([result.x, [1.0 - result.x.sum()]])
    profile = build(np.clip(x1, 0.0, 1.0))
    n1 = scenario.n_app0 - profile.n[1:].sum()
    if result.fun > tol or n1 < 0.0:
        raise OuterLoopError(
            f"outer loop stopped at residual {result.fun:.3g} (n^1 = {n1:.3g} mol)",
            result.fun)
    profile.n[0] = n1
    profile.H[0] = n1 * float(sys.f_hl(profile.T[0], profile.x[0]))
    return OuterLoopResult(profile=profile, residual=result.fun,
                           history=history, n_evals=result.n_evals)


# ---------------------------------------------------------------------------
# instationary transition


def epsilon_ramp(t_pre: float, eps0: float):
    """Smooth default path 0 -> eps0 over [t_pre, 0] (BVP initial guess)."""

    def path(t: float) -> float:
        u = min(max((t - t_pre) / (0.0 - t_pre), 0.0), 1.0)
        return eps0 * u * u * (3.0 - 2.0 * u)

    return path


def epsilon_path_parameterization(grid: CollocationGrid, t_pre: float, eps0: float) -> dict:
    """Description of the free efflux path used by the transition BVP."""
    return {
        "kind": "piecewise-polynomial state on the collocation grid",
        "bounds": (0.0, 1.0),
        "endpoint_conditions": {"t_pre": 0.0, "t0": eps0},
        "n_values": 1 + grid.n_finite_elements * grid.n_collocation_points,
        "initial_guess": epsilon_ramp(t_pre, eps0),
    }


@dataclass
class InstationaryResult:
    xi0: np.ndarray            # differential state at t = 0
    eta0: np.ndarray           # perturbed-layout algebraic state at t = 0
    s0: np.ndarray             # slack values at t = 0
    epsilon_path: np.ndarray   # path values at [t_pre, stages...]
    bc_residual: np.ndarray
    bvp_iterations: int
    max_slack: float


def instationary_init(model: ColumnModel, scenario: InitScenario,
                      stationary: StationaryProfile,
                      grid: CollocationGrid = CollocationGrid(),
                      slack_bound: float = 1e-3,
                      tol: float = 1e-9) -> InstationaryResult:
    """Solve the relaxed-system BVP from total reflux to the prescribed efflux.

    The stationary profile seeds every discretization point; the efflux
    ratio is a free path with pinned endpoints; the apparatus conditions
    are imposed at t = 0.  Returns the state at t = 0 together with an
    algebraic guess for the perturbed system.
    """
    dims = model.dims
    S = dims.S
    xi_st, eta_st = stationary.pack_state(model)
    V, y, T, xC, L = dims.split_eta(eta_st)
    alg_st = dims.pack_eta_relaxed(V, np.zeros(S), y, T, xC, L)

    scaling = ColumnScaling.for_scenario(scenario.n_app0, scenario.Q0)
    problem = RelaxedBvpProblem(model, scenario.P0, scenario.Q0, scenario.T_cond0,
                                scenario.eps0, scenario.n_app0, scenario.x_app0,
                                scaling=scaling, slack_bound=slack_bound)
    res = solve_bvp(problem, (scenario.t_pre, 0.0), xi_st, alg_st, grid,
                    path_guess=epsilon_ramp(scenario.t_pre, scenario.eps0),
                    tol=tol, alg_bounds=problem.alg_bounds, path_bounds=(0.0, 1.0))
    sol = res.solution
    xi0 = sol.final_xi
    Vf, sf, yf, Tf, xCf, Lf = dims.split_eta_relaxed(sol.final_alg)
    eta0 = dims.pack_eta(Vf, yf, Tf, xCf, Lf)
    return InstationaryResult(
        xi0=xi0, eta0=eta0, s0=sf, epsilon_path=res.path,
        bc_residual=res.bc_residual, bvp_iterations=res.iterations,
        max_slack=float(np.max(np.abs(sol.alg_stages[:, :, S:2 * S]))))


@dataclass
class InitializationReport:
    scenario: InitScenario
    outer: OuterLoopResult
    instationary: InstationaryResult | None

    def text(self) -> str:
        lines = ["stationary initialization",
                 f"  apparatus residual |x_app - target|^2 = {self.outer.residual:.3e}",
                 f"  objective evaluations: {self.outer.n_evals}",
                 f"  pot holdup n^1 = {self.outer.profile.n[0]:.6f} mol",
                 "  stage profile (T K, V mol/s, n mol):"]
        p = self.outer.profile
        for j in range(len(p.T)):
            lines.append(f"    stage {j + 1}: T={p.T[j]:9.4f}  V={p.V[j]:.6e}  n={p.n[j]:.6e}")
        if self.instationary is not None:
            ins = self.instationary
            lines += ["instationary transition",
                      f"  boundary residuals: {np.array2string(ins.bc_residual, precision=3)}",
                      f"  max |slack| over grid: {ins.max_slack:.3e}",
                      f"  Gauss-Newton iterations: {ins.bvp_iterations}"]
        return "\n".join(lines)


def initialize(model: ColumnModel, scenario: InitScenario,
               grid: CollocationGrid = CollocationGrid(),
               x1_guess=None, with_transition: bool = True) -> InitializationReport:
    """Full startup: outer/inner stationary loops, then the transition BVP."""
    outer = outer_loop(model.sys, model.cfg, scenario, x1_guess=x1_guess)
    ins = None
    if with_transition and scenario.eps0 > 0.0:
        ins = instationary_init(model, scenario, outer.profile, grid)
    return InitializationReport(scenario=scenario, outer=outer, instationary=ins)

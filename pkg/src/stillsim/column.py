"""Residual assembly and algebraic Jacobians for the batch-column DAE variants.

Five closely related semi-explicit systems describe the column:

* original: index-2 MESH form (liquid summations carry no algebraic
  variable, vapor streams enter no algebraic equation);
* intermediary: component-C balance dropped, x_C made algebraic, the
  differentiated liquid summations added (still singular along solutions);
* perturbed: intermediary with perturbation parameters delta in the
  component balances and auxiliary equations (index 1 for delta > 0);
* relaxed: intermediary plus slack variables in the vapor summations
  (index 1 wherever all slacks are nonzero);
* alternative: the vapor-summation-differentiation reduction with
  algebraicized enthalpy balances (kept for cross-checks).

Variable and equation orderings are fixed so that the algebraic Jacobians
of the reduced variants are literally upper triangular; assembly is
analytic through the VLE derivative operations.  The state fractions are
stored stage-major: xhat[j] holds the first C-1 liquid fractions of stage
j+1 (stages are 1-based in comments, 0-based in code).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import vle as vle_mod
from .thermo import HoldupConfig
from .vle import ChemSystem

KIND_ORIGINAL = "original"
KIND_PERTURBED = "perturbed"
KIND_UNPERTURBED = "unperturbed"
KIND_RELAXED = "relaxed"
KIND_ALTERNATIVE = "alternative"


class DegenerateStateError(RuntimeError):
    """Holdup, stream, or temperature values outside the evaluable region."""

    def __init__(self, message: str, stage: int | None = None):
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class ControlInput:
    """Control vector: efflux ratio, pressure, heat duty, condenser temperature.

    P_dot is only consumed by the alternative system's algebraicized
    enthalpy balances (0 for every bundled scenario).
    """

    epsilon: float
    P: float
    Q: float
    T_cond: float
    P_dot: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("efflux ratio must lie in [0, 1]")
        if self.P <= 0.0:
            raise ValueError("pressure must be positive")


@dataclass(frozen=True)
class PerturbationSet:
    """Perturbation parameters delta[j, i] >= 0 (stage-major)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("delta must be a (stages, components) array")
        if np.any(v < 0.0):
            raise ValueError("perturbation parameters must be nonnegative")
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, S: int, C: int, value: float = 1e-6) -> "PerturbationSet":
        return cls(np.full((S, C), value))

    @classmethod
    def zero(cls, S: int, C: int) -> "PerturbationSet":
        return cls(np.zeros((S, C)))

    def stage_sums(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def check_regular(self) -> None:
        """Require 0 < delta^1 <= ... <= delta^S of the per-stage sums."""
        d = self.stage_sums()
        if d[0] <= 0.0 or np.any(np.diff(d) < 0.0):
            raise ValueError("stage sums must satisfy 0 < d^1 <= ... <= d^S")


@dataclass(frozen=True)
class ColumnConfig:
    """Stage count, holdup constants, default perturbations, reference T."""

    S: int = 10
    holdup: HoldupConfig = field(default_factory=HoldupConfig)
    delta_uniform: float = 1e-6
    T_ref: float = 298.15

    def __post_init__(self):
        if self.S < 2:
            raise ValueError("the column needs at least 2 stages (pot and head)")
        if self.holdup.S != self.S:
            raise ValueError("holdup stage count disagrees with column stage count")

    def delta(self, C: int) -> PerturbationSet:
        return PerturbationSet.uniform(self.S, C, self.delta_uniform)


class ColumnDims:
    """Index bookkeeping for the state layouts of all system variants."""

    def __init__(self, S: int, C: int):
        self.S, self.C = S, C
        self.n_xi = (2 + C) * S               # n, xhat, H
        self.n_eta = (4 + C) * S - 1          # V, y, T, x_C, L
        self.n_eta_relaxed = (5 + C) * S - 1  # V, s, y, T, x_C, L
        self.n_xi_alt = (1 + C) * S           # n, xhat
        self.n_eta_alt = (5 + C) * S - 1      # V, y, H, T, x_C, L
        self.n_xi_orig = (2 + C) * S          # n, x (all C), H
        self.n_eta_orig = (3 + C) * S - 1     # V, y, T, L

    # xi = (n^1..n^S, xhat^1..xhat^S, H^1..H^S)
    def split_xi(self, xi):
        S, C = self.S, self.C
        n = xi[:S]
        xhat = xi[S:S + S * (C - 1)].reshape(S, C - 1)
        H = xi[S + S * (C - 1):]
        return n, xhat, H

    def pack_xi(self, n, xhat, H):
        return np.concatenate([np.asarray(n, float),
                               np.asarray(xhat, float).ravel(),
                               np.asarray(H, float)])

    # eta = (V^S..V^1, y^1..y^S, T^1..T^S, x_C^1..x_C^S, L^1..L^{S-1})
    def split_eta(self, eta):
        S, C = self.S, self.C
        V = eta[:S][::-1]                  # ascending stage order
        y = eta[S:S + S * C].reshape(S, C)
        T = eta[S + S * C:S + S * C + S]
        xC = eta[S + S * C + S:S + S * C + 2 * S]
        L = eta[S + S * C + 2 * S:]
        return V, y, T, xC, L

    def pack_eta(self, V, y, T, xC, L):
        return np.concatenate([np.asarray(V, float)[::-1],
                               np.asarray(y, float).ravel(),
                               np.asarray(T, float), np.asarray(xC, float),
                               np.asarray(L, float)])

    # relaxed algebraic vector: (V^S..V^1, s^1..s^S, y, T, x_C, L)
    def split_eta_relaxed(self, eta_s):
        S, C = self.S, self.C
        V = eta_s[:S][::-1]
        s = eta_s[S:2 * S]
        y = eta_s[2 * S:2 * S + S * C].reshape(S, C)
        T = eta_s[2 * S + S * C:3 * S + S * C]
        xC = eta_s[3 * S + S * C:4 * S + S * C]
        L = eta_s[4 * S + S * C:]
        return V, s, y, T, xC, L

    def pack_eta_relaxed(self, V, s, y, T, xC, L):
        return np.concatenate([np.asarray(V, float)[::-1], np.asarray(s, float),
                               np.asarray(y, float).ravel(), np.asarray(T, float),
                               np.asarray(xC, float), np.asarray(L, float)])

    # alternative: xi = (n, xhat); eta = (V^S..V^1, y, H, T, x_C, L)
    def split_xi_alt(self, xi):
        S, C = self.S, self.C
        return xi[:S], xi[S:].reshape(S, C - 1)

    def split_eta_alt(self, eta):
        S, C = self.S, self.C
        V = eta[:S][::-1]
        y = eta[S:S + S * C].reshape(S, C)
        H = eta[S + S * C:2 * S + S * C]
        T = eta[2 * S + S * C:3 * S + S * C]
        xC = eta[3 * S + S * C:4 * S + S * C]
        L = eta[4 * S + S * C:]
        return V, y, H, T, xC, L

    def pack_eta_alt(self, V, y, H, T, xC, L):
        return np.concatenate([np.asarray(V, float)[::-1], np.asarray(y, float).ravel(),
                               np.asarray(H, float), np.asarray(T, float),
                               np.asarray(xC, float), np.asarray(L, float)])

    # original: xi = (n, x all C, H); eta = (V^S..V^1, y, T, L)
    def split_xi_orig(self, xi):
        S, C = self.S, self.C
        return xi[:S], xi[S:S + S * C].reshape(S, C), xi[S + S * C:]

    def pack_xi_orig(self, n, x, H):
        return np.concatenate([np.asarray(n, float), np.asarray(x, float).ravel(),
                               np.asarray(H, float)])

    def split_eta_orig(self, eta):
        S, C = self.S, self.C
        V = eta[:S][::-1]
        y = eta[S:S + S * C].reshape(S, C)
        T = eta[S + S * C:2 * S + S * C]
        L = eta[2 * S + S * C:]
        return V, y, T, L

    def pack_eta_orig(self, V, y, T, L):
        return np.concatenate([np.asarray(V, float)[::-1], np.asarray(y, float).ravel(),
                               np.asarray(T, float), np.asarray(L, float)])


def _names_stagewise(prefix: str, S: int, descending: bool = False) -> list[str]:
    rng = range(S, 0, -1) if descending else range(1, S + 1)
    return [f"{prefix}{j}" for j in rng]


class ColumnModel:
    """Bundles a chemical system with a column configuration."""

    def __init__(self, sys: ChemSystem, cfg: ColumnConfig):
        if cfg.T_ref != sys.enthalpy_ref.T_ref:
            raise ValueError("column T_ref disagrees with the system's enthalpy reference")
        self.sys = sys
        self.cfg = cfg
        self.dims = ColumnDims(cfg.S, sys.C)

    # ------------------------------------------------------------------
    # shared pieces

    def _check_n(self, n):
        if np.any(n == 0.0):
            j = int(np.argwhere(n == 0.0)[0][0])
            raise DegenerateStateError(f"zero holdup on stage {j + 1}", stage=j + 1)

    def _check_assembly(self, n, V, T):
        if np.any(n <= 0.0):
            j = int(np.argwhere(n <= 0.0)[0][0])
            raise DegenerateStateError(f"nonpositive holdup n={n[j]:.3g} mol on stage {j + 1}", stage=j + 1)
        if np.any(V < 0.0):
            j = int(np.argwhere(V < 0.0)[0][0])
            raise DegenerateStateError(f"negative vapor stream V={V[j]:.3g} mol/s on stage {j + 1}", stage=j + 1)
        if np.any(T < 150.0) or np.any(T > 600.0):
            j = int(np.argmax((T < 150.0) | (T > 600.0)))
            raise DegenerateStateError(f"temperature {T[j]:.1f} K on stage {j + 1} outside evaluable range", stage=j + 1)

    def _full_x(self, xhat, xC):
        return np.column_stack([xhat, xC])

    def _balance_matrix(self, x, y, V, L, eps, n, delta):
        """Component-balance right-hand sides, shape (S, C), perturbed form."""
        S, C = self.dims.S, self.dims.C
        M = np.empty((S, C), dtype=np.result_type(x, y, V, L, n))
        d = delta
        M[0] = (L[0] * (x[1] - x[0] - d[0]) - V[0] * (y[0] - x[0] - d[0])) / n[0]
        for j in range(1, S - 1):
            M[j] = (L[j] * (x[j + 1] - x[j] - d[j]) - V[j] * (y[j] - x[j] - d[j])
                    + V[j - 1] * (y[j - 1] - x[j] - d[j])) / n[j]
        M[S - 1] = (eps * V[S - 1] * (x[S - 1] + d[S - 1] - y[S - 1])
                    + V[S - 2] * (y[S - 2] - x[S - 1] - d[S - 1])) / n[S - 1]
        return M

    def _total_balance(self, V, L, eps):
        S = self.dims.S
        fn = np.empty(S)
        fn[0] = L[0] - V[0]
        for j in range(1, S - 1):
            fn[j] = L[j] - V[j] - L[j - 1] + V[j - 1]
        fn[S - 1] = -eps * V[S - 1] - L[S - 2] + V[S - 2]
        return fn

    def _enthalpy_balance(self, T, x, y, V, L, eps, u: ControlInput):
        S = self.dims.S
        sys = self.sys
        hl = sys.f_hl(T, x)              # (S,)
        hv = sys.f_hv(T, y)              # (S,)
        hl_cond = float(sys.f_hl(u.T_cond, y[S - 1]))
        fH = np.empty(S)
        fH[0] = L[0] * hl[1] - V[0] * hv[0] + u.Q
        for j in range(1, S - 1):
            fH[j] = (L[j] * hl[j + 1] - V[j] * hv[j]
                     - L[j - 1] * hl[j] + V[j - 1] * hv[j - 1])
        fH[S - 1] = ((1.0 - eps) * V[S - 1] * hl_cond - V[S - 1] * hv[S - 1]
                     - L[S - 2] * hl[S - 1] + V[S - 2] * hv[S - 2])
        return fH

    def _holdup_residual(self, n, L):
        coeff = self.cfg.holdup.coefficient
        return n[1:] - coeff * L

    # ------------------------------------------------------------------
    # residuals

    def residual_perturbed(self, xi, eta, u: ControlInput,
                           delta: PerturbationSet | None = None):
        """(f, g) of the perturbed system; delta=None uses the config default."""
        dims = self.dims
        if delta is None:
            delta = self.cfg.delta(dims.C)
        d = delta.values
        n, xhat, H = dims.split_xi(np.asarray(xi, float))
        V, y, T, xC, L = dims.split_eta(np.asarray(eta, float))
        self._check_n(n)
        x = self._full_x(xhat, xC)

        M = self._balance_matrix(x, y, V, L, u.epsilon, n, d)
        f = np.concatenate([self._total_balance(V, L, u.epsilon),
                            M[:, :dims.C - 1].ravel(),
                            self._enthalpy_balance(T, x, y, V, L, u.epsilon, u)])

        fvle = vle_mod.y_vle(self.sys, u.P, T, x)
        g = np.concatenate([
            M.sum(axis=1)[::-1],                       # aux^S .. aux^1
            (y - fvle).ravel(),                        # ydef, stage-major
            H - n * self.sys.f_hl(T, x),               # edef
            x.sum(axis=1) - 1.0,                       # xsum
            self._holdup_residual(n, L),               # hold^2 .. hold^S
        ])
        return f, g

    def residual_relaxed(self, xi, eta, s, u: ControlInput):
        """(f, g) of the relaxed system: intermediary plus slack summations."""
        dims = self.dims
        zero = PerturbationSet.zero(dims.S, dims.C)
        f, g_p = self.residual_perturbed(xi, eta, u, zero)
        _, y, _, _, _ = dims.split_eta(np.asarray(eta, float))
        slack = y.sum(axis=1) - 1.0 - np.asarray(s, float)
        S, C = dims.S, dims.C
        g = np.concatenate([g_p[:S], slack, g_p[S:]])
        return f, g

    def residual_alternative(self, xi_alt, eta_alt, u: ControlInput):
        """(f, g) of the vapor-summation-differentiation (alternative) system."""
        dims = self.dims
        S, C = dims.S, dims.C
        n, xhat = dims.split_xi_alt(np.asarray(xi_alt, float))
        V, y, H, T, xC, L = dims.split_eta_alt(np.asarray(eta_alt, float))
        self._check_n(n)
        x = self._full_x(xhat, xC)
        sys = self.sys

        zero = np.zeros((S, C))
        M = self._balance_matrix(x, y, V, L, u.epsilon, n, zero)
        f = np.concatenate([self._total_balance(V, L, u.epsilon),
                            M[:, :C - 1].ravel()])

        fn = self._total_balance(V, L, u.epsilon)
        fH = self._enthalpy_balance(T, x, y, V, L, u.epsilon, u)
        hl = sys.f_hl(T, x)
        aeb = np.empty(S)
        for j in range(S):
            a, b = vle_mod.alt_coeffs_a_b(sys, u.P, float(T[j]), x[j])
            # a . (undivided balance numerators) = a . (M[j] * n[j])
            aeb[j] = fn[j] * hl[j] + float(np.dot(a, M[j] * n[j])) + n[j] * b * u.P_dot - fH[j]

        fvle = vle_mod.y_vle(sys, u.P, T, x)
        g = np.concatenate([
            aeb[::-1],                                  # aebal^S .. aebal^1
            (y - fvle).ravel(),                         # ydef
            H - n * hl,                                 # edef
            fvle.sum(axis=1) - 1.0,                     # ysum (equilibrium summation)
            x.sum(axis=1) - 1.0,                        # xsum
            self._holdup_residual(n, L),                # hold
        ])
        return f, g

    def residual_original(self, xi_orig, eta_orig, u: ControlInput):
        """(f, g) of the index-2 original system (cross-checks only)."""
        dims = self.dims
        S, C = dims.S, dims.C
        n, x, H = dims.split_xi_orig(np.asarray(xi_orig, float))
        V, y, T, L = dims.split_eta_orig(np.asarray(eta_orig, float))
        self._check_n(n)

        M = self._balance_matrix(x, y, V, L, u.epsilon, n, np.zeros((S, C)))
        f = np.concatenate([self._total_balance(V, L, u.epsilon),
                            M.ravel(),
                            self._enthalpy_balance(T, x, y, V, L, u.epsilon, u)])
        fvle = vle_mod.y_vle(self.sys, u.P, T, x)
        g = np.concatenate([
            x.sum(axis=1) - 1.0,                        # xsum (zero rows)
            (y - fvle).ravel(),                         # ydef
            H - n * self.sys.f_hl(T, x),                # edef
            self._holdup_residual(n, L),                # hold
        ])
        return f, g

    # ------------------------------------------------------------------
    # closed forms and reports

    def vapor_sum_closed_form(self, eta, u: ControlInput,
                              delta: PerturbationSet | None = None) -> np.ndarray:
        """Per-stage vapor-fraction sums implied along perturbed solutions."""
        dims = self.dims
        if delta is None:
            delta = self.cfg.delta(dims.C)
        V, y, T, xC, L = dims.split_eta(np.asarray(eta, float))
        d = delta.stage_sums()
        S = dims.S
        if np.any(V == 0.0) or u.epsilon * V[S - 1] == 0.0:
            raise ZeroDivisionError("vapor streams (and eps*V^S) must be nonzero")
        out = np.empty(S)
        out[0] = 1.0 + d[0] - L[0] * d[0] / V[0]
        acc = L[0] * d[0]
        for j in range(1, S - 1):
            acc += L[j] * d[j] - V[j - 1] * (d[j - 1] - d[j])
            out[j] = 1.0 + d[j] - acc / V[j]
        acc_head = sum(L[k] * d[k] for k in range(S - 1))
        acc_head -= sum(V[k] * (d[k] - d[k + 1]) for k in range(S - 1))
        out[S - 1] = 1.0 + d[S - 1] - acc_head / (u.epsilon * V[S - 1])
        return out

    def apparatus_quantities(self, xi) -> tuple[float, np.ndarray]:
        """Total apparatus holdup (mol) and composition (length C)."""
        dims = self.dims
        n, xhat, _ = dims.split_xi(np.asarray(xi, float))
        x = self._full_x(xhat, 1.0 - xhat.sum(axis=1))
        n_app = float(n.sum())
        x_app = (n[:, None] * x).sum(axis=0) / n_app
        return n_app, x_app

    def equation_labels(self, kind: str) -> list[str]:
        S, C = self.dims.S, self.dims.C
        ydef = [f"ydef{i + 1}^{j}" for j in range(1, S + 1) for i in range(C)]
        if kind in (KIND_PERTURBED, KIND_UNPERTURBED):
            return (_names_stagewise("aux^", S, descending=True) + ydef
                    + _names_stagewise("edef^", S) + _names_stagewise("xsum^", S)
                    + [f"hold^{j}" for j in range(2, S + 1)])
        if kind == KIND_RELAXED:
            return (_names_stagewise("aux^", S, descending=True)
                    + _names_stagewise("slack^", S) + ydef
                    + _names_stagewise("edef^", S) + _names_stagewise("xsum^", S)
                    + [f"hold^{j}" for j in range(2, S + 1)])
        if kind == KIND_ALTERNATIVE:
            return (_names_stagewise("aebal^", S, descending=True) + ydef
                    + _names_stagewise("edef^", S) + _names_stagewise("ysum^", S)
                    + _names_stagewise("xsum^", S)
                    + [f"hold^{j}" for j in range(2, S + 1)])
        if kind == KIND_ORIGINAL:
            return (_names_stagewise("xsum^", S) + ydef
                    + _names_stagewise("edef^", S)
                    + [f"hold^{j}" for j in range(2, S + 1)])
        raise ValueError(f"unknown system kind {kind!r}")

    def variable_labels(self, kind: str) -> list[str]:
        S, C = self.dims.S, self.dims.C
        V = _names_stagewise("V^", S, descending=True)
        y = [f"y{i + 1}^{j}" for j in range(1, S + 1) for i in range(C)]
        T = _names_stagewise("T^", S)
        xC = [f"x{C}^{j}" for j in range(1, S + 1)]
        L = [f"L^{j}" for j in range(1, S)]
        if kind in (KIND_PERTURBED, KIND_UNPERTURBED):
            return V + y + T + xC + L
        if kind == KIND_RELAXED:
            return V + _names_stagewise("s^", S) + y + T + xC + L
        if kind == KIND_ALTERNATIVE:
            return V + y + _names_stagewise("H^", S) + T + xC + L
        if kind == KIND_ORIGINAL:
            return V + y + T + L
        raise ValueError(f"unknown system kind {kind!r}")

    # ------------------------------------------------------------------
    # algebraic Jacobians

    def jacobian_alg(self, kind: str, xi, eta, u: ControlInput,
                     delta: PerturbationSet | None = None, s=None) -> np.ndarray:
        """Analytic D_eta g for the requested system variant."""
        if kind == KIND_UNPERTURBED:
            delta = PerturbationSet.zero(self.dims.S, self.dims.C)
            kind = KIND_PERTURBED
        if kind == KIND_PERTURBED:
            if delta is None:
                delta = self.cfg.delta(self.dims.C)
            _, _, _, J = self.jacobian_perturbed_full(xi, eta, u, delta)
            return J
        if kind == KIND_RELAXED:
            if s is None:
                raise ValueError("relaxed kind needs the slack vector s")
            _, _, _, J = self.jacobian_relaxed_full(xi, eta, s, u)
            return J
        if kind == KIND_ALTERNATIVE:
            return self._jacobian_alg_alternative(xi, eta, u)
        if kind == KIND_ORIGINAL:
            return self._jacobian_alg_original(xi, eta, u)
        raise ValueError(f"unknown system kind {kind!r}")

    def _vle_pack(self, T, x, P):
        """VLE values and derivatives shared by the Jacobian assemblies."""
        sys = self.sys
        fvle = vle_mod.y_vle(sys, P, T, x)
        dfv_T = vle_mod.d_fvle_dT(sys, P, T, x)
        dfv_x = vle_mod.d_fvle_dx(sys, P, T, x)
        hliq = sys.h_liq(T)          # (S, C) pure liquid enthalpies
        hvap = sys.h_vap(T)          # (S, C) pure vapor enthalpies
        dhl_T = sys.d_f_hl_dT(T, x)  # (S,)
        return fvle, dfv_T, dfv_x, hliq, hvap, dhl_T

    def jacobian_perturbed_full(self, xi, eta, u: ControlInput,
                                delta: PerturbationSet | None = None):
        """All four analytic blocks (Jf_xi, Jf_eta, Jg_xi, Jg_eta), perturbed."""
        dims = self.dims
        S, C = dims.S, dims.C
        if delta is None:
            delta = self.cfg.delta(C)
        d = delta.values
        n, xhat, H = dims.split_xi(np.asarray(xi, float))
        V, y, T, xC, L = dims.split_eta(np.asarray(eta, float))
        self._check_assembly(n, V, T)
        x = self._full_x(xhat, xC)
        eps = u.epsilon
        sys = self.sys

        fvle, dfv_T, dfv_x, hliq, hvap, dhl_T = self._vle_pack(T, x, u.P)
        hl = np.sum(x * hliq, axis=1)
        hv = np.sum(y * hvap, axis=1)
        dhv_T = sys.d_f_hv_dT(T, y)
        hl_cond_vec = sys.h_liq(u.T_cond)        # (C,)
        hl_cond = float(np.dot(y[S - 1], hl_cond_vec))
        M = self._balance_matrix(x, y, V, L, eps, n, d)

        # offsets
        oxi_n, oxi_x, oxi_H = 0, S, S + S * (C - 1)
        oe_V, oe_y, oe_T, oe_xC, oe_L = 0, S, S + S * C, 2 * S + S * C, 3 * S + S * C
        col_V = lambda j: oe_V + (S - 1 - j)          # ascending stage j -> column
        col_y = lambda j, i: oe_y + j * C + i
        col_xix = lambda j, i: oxi_x + j * (C - 1) + i

        n_xi, n_eta = dims.n_xi, dims.n_eta
        Jf_xi = np.zeros((n_xi, n_xi))
        Jf_eta = np.zeros((n_xi, n_eta))
        Jg_xi = np.zeros((n_eta, n_xi))
        Jg_eta = np.zeros((n_eta, n_eta))

        # --- f_n rows (0..S-1)
        for j in range(S):
            if j == 0:
                Jf_eta[0, oe_L] = 1.0
                Jf_eta[0, col_V(0)] = -1.0
            elif j < S - 1:
                Jf_eta[j, oe_L + j] = 1.0
                Jf_eta[j, oe_L + j - 1] = -1.0
                Jf_eta[j, col_V(j)] = -1.0
                Jf_eta[j, col_V(j - 1)] = 1.0
            else:
                Jf_eta[j, col_V(S - 1)] = -eps
                Jf_eta[j, oe_L + S - 2] = -1.0
                Jf_eta[j, col_V(S - 2)] = 1.0

        # --- component-balance derivative helper (shared by f_x rows and aux rows)
        # coefficients of x_i^j, x_i^{j+1}, y_i^j, y_i^{j-1}, and the stream partials
        cx_self = np.empty(S)     # d/dx_i^j, same for every component i
        cx_up = np.zeros(S)       # d/dx_i^{j+1}
        cy_self = np.empty(S)
        cy_below = np.zeros(S)
        cx_self[0] = (-L[0] + V[0]) / n[0]
        cx_up[0] = L[0] / n[0]
        cy_self[0] = -V[0] / n[0]
        for j in range(1, S - 1):
            cx_self[j] = (-L[j] + V[j] - V[j - 1]) / n[j]
            cx_up[j] = L[j] / n[j]
            cy_self[j] = -V[j] / n[j]
            cy_below[j] = V[j - 1] / n[j]
        cx_self[S - 1] = (eps * V[S - 1] - V[S - 2]) / n[S - 1]
        cy_self[S - 1] = -eps * V[S - 1] / n[S - 1]
        cy_below[S - 1] = V[S - 2] / n[S - 1]

        def balance_stream_partials(j, i):
            """(dV^j, dV^{j-1}, dL^j) of balance entry M[j, i]."""
            if j == 0:
                return (-(y[0, i] - x[0, i] - d[0, i]) / n[0], 0.0,
                        (x[1, i] - x[0, i] - d[0, i]) / n[0])
            if j < S - 1:
                return (-(y[j, i] - x[j, i] - d[j, i]) / n[j],
                        (y[j - 1, i] - x[j, i] - d[j, i]) / n[j],
                        (x[j + 1, i] - x[j, i] - d[j, i]) / n[j])
            return (eps * (x[S - 1, i] + d[S - 1, i] - y[S - 1, i]) / n[S - 1],
                    (y[S - 2, i] - x[S - 1, i] - d[S - 1, i]) / n[S - 1], 0.0)

        # --- f_x rows (S .. S + S(C-1) - 1)
        for j in range(S):
            for i in range(C - 1):
                r = S + j * (C - 1) + i
                Jf_xi[r, oxi_n + j] = -M[j, i] / n[j]
                Jf_xi[r, col_xix(j, i)] = cx_self[j]
                if j < S - 1:
                    Jf_xi[r, col_xix(j + 1, i)] = cx_up[j]
                Jf_eta[r, col_y(j, i)] = cy_self[j]
                if j > 0:
                    Jf_eta[r, col_y(j - 1, i)] = cy_below[j]
                dVj, dVm, dLj = balance_stream_partials(j, i)
                Jf_eta[r, col_V(j)] = dVj
                if j > 0:
                    Jf_eta[r, col_V(j - 1)] = dVm
                if j < S - 1:
                    Jf_eta[r, oe_L + j] = dLj

        # --- f_H rows (S + S(C-1) .. n_xi - 1)
        oH = S + S * (C - 1)
        for j in range(S):
            r = oH + j
            if j < S - 1:
                Jf_eta[r, col_V(j)] = -hv[j]
                Jf_eta[r, oe_L + j] = hl[j + 1]
                Jf_eta[r, oe_T + j] = -V[j] * dhv_T[j]
                Jf_eta[r, oe_T + j + 1] = L[j] * dhl_T[j + 1]
                for i in range(C):
                    Jf_eta[r, col_y(j, i)] = -V[j] * hvap[j, i]
                # x^{j+1} enters through f_hl(T^{j+1}, x^{j+1})
                for i in range(C - 1):
                    Jf_xi[r, col_xix(j + 1, i)] = L[j] * hliq[j + 1, i]
                Jf_eta[r, oe_xC + j + 1] = L[j] * hliq[j + 1, C - 1]
            else:
                Jf_eta[r, col_V(S - 1)] = (1.0 - eps) * hl_cond - hv[S - 1]
                Jf_eta[r, oe_T + S - 1] = -V[S - 1] * dhv_T[S - 1]
                for i in range(C):
                    Jf_eta[r, col_y(S - 1, i)] = ((1.0 - eps) * V[S - 1] * hl_cond_vec[i]
                                                  - V[S - 1] * hvap[S - 1, i])
            if j > 0:
                Jf_eta[r, oe_L + j - 1] = -hl[j]
                Jf_eta[r, col_V(j - 1)] = hv[j - 1]
                Jf_eta[r, oe_T + j] += -L[j - 1] * dhl_T[j]
                Jf_eta[r, oe_T + j - 1] = V[j - 1] * dhv_T[j - 1]
                for i in range(C - 1):
                    Jf_xi[r, col_xix(j, i)] = -L[j - 1] * hliq[j, i]
                Jf_eta[r, oe_xC + j] = -L[j - 1] * hliq[j, C - 1]

        # --- g rows: aux block (rows 0..S-1 store aux^S..aux^1)
        for j in range(S):
            r = S - 1 - j
            Jg_xi[r, oxi_n + j] = -M[j].sum() / n[j]
            for i in range(C - 1):
                Jg_xi[r, col_xix(j, i)] = cx_self[j]
                if j < S - 1:
                    Jg_xi[r, col_xix(j + 1, i)] = cx_up[j]
            Jg_eta[r, oe_xC + j] = cx_self[j]
            if j < S - 1:
                Jg_eta[r, oe_xC + j + 1] = cx_up[j]
            for i in range(C):
                Jg_eta[r, col_y(j, i)] = cy_self[j]
                if j > 0:
                    Jg_eta[r, col_y(j - 1, i)] = cy_below[j]
            dVj = dVm = dLj = 0.0
            for i in range(C):
                pj, pm, pl = balance_stream_partials(j, i)
                dVj += pj; dVm += pm; dLj += pl
            Jg_eta[r, col_V(j)] = dVj
            if j > 0:
                Jg_eta[r, col_V(j - 1)] = dVm
            if j < S - 1:
                Jg_eta[r, oe_L + j] = dLj

        # --- ydef rows
        oy = S
        for j in range(S):
            for i in range(C):
                r = oy + j * C + i
                Jg_eta[r, col_y(j, i)] = 1.0
                Jg_eta[r, oe_T + j] = -dfv_T[j, i]
                Jg_eta[r, oe_xC + j] = -dfv_x[j, i, C - 1]
                for p in range(C - 1):
                    Jg_xi[r, col_xix(j, p)] = -dfv_x[j, i, p]

        # --- edef rows
        oed = S + S * C
        for j in range(S):
            r = oed + j
            Jg_xi[r, oxi_n + j] = -hl[j]
            Jg_xi[r, oxi_H + j] = 1.0
            Jg_eta[r, oe_T + j] = -n[j] * dhl_T[j]
            Jg_eta[r, oe_xC + j] = -n[j] * hliq[j, C - 1]
            for p in range(C - 1):
                Jg_xi[r, col_xix(j, p)] = -n[j] * hliq[j, p]

        # --- xsum rows
        oxs = 2 * S + S * C
        for j in range(S):
            r = oxs + j
            Jg_eta[r, oe_xC + j] = 1.0
            for p in range(C - 1):
                Jg_xi[r, col_xix(j, p)] = 1.0

        # --- hold rows
        ohd = 3 * S + S * C
        coeff = self.cfg.holdup.coefficient
        for j in range(S - 1):
            r = ohd + j
            Jg_xi[r, oxi_n + j + 1] = 1.0
            Jg_eta[r, oe_L + j] = -coeff

        return Jf_xi, Jf_eta, Jg_xi, Jg_eta

    def control_derivatives_perturbed(self, xi, eta, u: ControlInput,
                                      delta: PerturbationSet | None = None):
        """(df/deps, dg/deps) for the perturbed/intermediary system."""
        dims = self.dims
        S, C = dims.S, dims.C
        if delta is None:
            delta = self.cfg.delta(C)
        d = delta.values
        n, xhat, _ = dims.split_xi(np.asarray(xi, float))
        V, y, T, xC, L = dims.split_eta(np.asarray(eta, float))
        x = self._full_x(xhat, xC)
        f_eps = np.zeros(dims.n_xi)
        g_eps = np.zeros(dims.n_eta)
        f_eps[S - 1] = -V[S - 1]
        head = V[S - 1] * (x[S - 1] + d[S - 1] - y[S - 1]) / n[S - 1]   # (C,)
        for i in range(C - 1):
            f_eps[S + (S - 1) * (C - 1) + i] = head[i]
        hl_cond = float(self.sys.f_hl(u.T_cond, y[S - 1]))
        f_eps[dims.n_xi - 1] = -V[S - 1] * hl_cond
        g_eps[0] = head.sum()      # aux^S is the first g row
        return f_eps, g_eps

    def jacobian_relaxed_full(self, xi, eta, s, u: ControlInput):
        """Analytic blocks for the relaxed system (algebraic vector includes s)."""
        dims = self.dims
        S, C = dims.S, dims.C
        zero = PerturbationSet.zero(S, C)
        Jf_xi, Jf_eta, Jg_xi, Jg_eta = self.jacobian_perturbed_full(xi, eta, u, zero)
        n_eta_r = dims.n_eta_relaxed
        n_xi = dims.n_xi

        # column map: V block unchanged, s block inserted, remaining shifted by S
        Jf_eta_r = np.zeros((n_xi, n_eta_r))
        Jf_eta_r[:, :S] = Jf_eta[:, :S]
        Jf_eta_r[:, 2 * S:] = Jf_eta[:, S:]

        Jg_xi_r = np.zeros((n_eta_r, n_xi))
        Jg_eta_r = np.zeros((n_eta_r, n_eta_r))
        # row map: aux rows, then slack rows, then the rest
        Jg_xi_r[:S] = Jg_xi[:S]
        Jg_xi_r[2 * S:] = Jg_xi[S:]
        Jg_eta_r[:S, :S] = Jg_eta[:S, :S]
        Jg_eta_r[:S, 2 * S:] = Jg_eta[:S, S:]
        Jg_eta_r[2 * S:, :S] = Jg_eta[S:, :S]
        Jg_eta_r[2 * S:, 2 * S:] = Jg_eta[S:, S:]
        # slack rows: sum_i y_i^j - 1 - s^j
        oy = 2 * S
        for j in range(S):
            r = S + j
            Jg_eta_r[r, S + j] = -1.0
            for i in range(C):
                Jg_eta_r[r, oy + j * C + i] = 1.0
        return Jf_xi, Jf_eta_r, Jg_xi_r, Jg_eta_r

    def control_derivatives_relaxed(self, xi, eta, s, u: ControlInput):
        dims = self.dims
        S = dims.S
        f_eps, g_eps_p = self.control_derivatives_perturbed(
            xi, eta, u, PerturbationSet.zero(S, dims.C))
        g_eps = np.zeros(dims.n_eta_relaxed)
        g_eps[:S] = g_eps_p[:S]
        g_eps[2 * S:] = g_eps_p[S:]
        return f_eps, g_eps

    def _jacobian_alg_original(self, xi_orig, eta_orig, u: ControlInput):
        dims = self.dims
        S, C = dims.S, dims.C
        n, x, H = dims.split_xi_orig(np.asarray(xi_orig, float))
        V, y, T, L = dims.split_eta_orig(np.asarray(eta_orig, float))
        fvle, dfv_T, dfv_x, hliq, hvap, dhl_T = self._vle_pack(T, x, u.P)

        n_eta = dims.n_eta_orig
        J = np.zeros((n_eta, n_eta))
        oe_y, oe_T, oe_L = S, S + S * C, 2 * S + S * C
        # xsum rows: no algebraic dependence at all (rows stay zero)
        oy = S
        for j in range(S):
            for i in range(C):
                r = oy + j * C + i
                J[r, oe_y + j * C + i] = 1.0
                J[r, oe_T + j] = -dfv_T[j, i]
        oed = S + S * C
        for j in range(S):
            J[oed + j, oe_T + j] = -n[j] * dhl_T[j]
        ohd = 2 * S + S * C
        coeff = self.cfg.holdup.coefficient
        for j in range(S - 1):
            J[ohd + j, oe_L + j] = -coeff
        return J

    def _jacobian_alg_alternative(self, xi_alt, eta_alt, u: ControlInput):
        """D_eta g for the alternative system.

        V, y, H and L columns are analytic; the T and x_C columns of the
        aebal rows run through the a/b coefficient derivatives and are
        filled by complex-step differentiation of the residual (exact to
        machine precision, avoiding second-derivative NRTL code).
        """
        dims = self.dims
        S, C = dims.S, dims.C
        n, xhat = dims.split_xi_alt(np.asarray(xi_alt, float))
        V, y, H, T, xC, L = dims.split_eta_alt(np.asarray(eta_alt, float))
        x = self._full_x(xhat, xC)
        sys = self.sys
        eps = u.epsilon

        fvle, dfv_T, dfv_x, hliq, hvap, dhl_T = self._vle_pack(T, x, u.P)
        hl = np.sum(x * hliq, axis=1)
        hv = np.sum(y * hvap, axis=1)
        dhv_T = sys.d_f_hv_dT(T, y)
        hl_cond_vec = sys.h_liq(u.T_cond)
        hl_cond = float(np.dot(y[S - 1], hl_cond_vec))
        ab = [vle_mod.alt_coeffs_a_b(sys, u.P, float(T[j]), x[j]) for j in range(S)]

        n_eta = dims.n_eta_alt
        J = np.zeros((n_eta, n_eta))
        oe_V, oe_y, oe_H = 0, S, S + S * C
        oe_T, oe_xC, oe_L = 2 * S + S * C, 3 * S + S * C, 4 * S + S * C
        col_V = lambda j: oe_V + (S - 1 - j)
        row_aeb = lambda j: S - 1 - j

        for j in range(S):
            r = row_aeb(j)
            a_j, b_j = ab[j]
            if j < S - 1:
                J[r, col_V(j)] = -hl[j] - float(np.dot(a_j, y[j] - x[j])) + hv[j]
                J[r, oe_L + j] = hl[j] + float(np.dot(a_j, x[j + 1] - x[j])) - hl[j + 1]
                for i in range(C):
                    J[r, oe_y + j * C + i] = -V[j] * a_j[i] + V[j] * hvap[j, i]
            else:
                J[r, col_V(j)] = (-eps * hl[j] - eps * float(np.dot(a_j, y[j] - x[j]))
                                  - (1.0 - eps) * hl_cond + hv[j])
                for i in range(C):
                    J[r, oe_y + j * C + i] = (-eps * V[j] * a_j[i]
                                              - (1.0 - eps) * V[j] * hl_cond_vec[i]
                                              + V[j] * hvap[j, i])
            if j > 0:
                J[r, col_V(j - 1)] = hl[j] + float(np.dot(a_j, y[j - 1] - x[j])) - hv[j - 1]
                # L^{j-1} cancels between the total-balance term and the RHS
                for i in range(C):
                    J[r, oe_y + (j - 1) * C + i] = V[j - 1] * a_j[i] - V[j - 1] * hvap[j - 1, i]

        # complex-step T and x_C columns of the aebal rows
        def aeb_vec(T_c, xC_c):
            x_c = np.column_stack([xhat.astype(complex), xC_c])
            M = self._balance_matrix(x_c, y.astype(complex), V.astype(complex),
                                     L.astype(complex), eps, n.astype(complex),
                                     np.zeros((S, C)))
            fn = self._total_balance(V, L, eps)
            hl_c = np.sum(x_c * sys.h_liq(T_c), axis=1)
            hv_c = np.sum(y * sys.h_vap(T_c), axis=1)
            hl_cond_c = np.sum(y[S - 1] * sys.h_liq(complex(u.T_cond)))
            out = np.empty(S, dtype=complex)
            for jj in range(S):
                a_c, b_c = _alt_coeffs_complex(sys, u.P, T_c[jj], x_c[jj])
                if jj == 0:
                    fH = L[0] * hl_c[1] - V[0] * hv_c[0] + u.Q
                elif jj < S - 1:
                    fH = (L[jj] * hl_c[jj + 1] - V[jj] * hv_c[jj]
                          - L[jj - 1] * hl_c[jj] + V[jj - 1] * hv_c[jj - 1])
                else:
                    fH = ((1.0 - eps) * V[jj] * hl_cond_c - V[jj] * hv_c[jj]
                          - L[jj - 1] * hl_c[jj] + V[jj - 1] * hv_c[jj - 1])
                out[jj] = fn[jj] * hl_c[jj] + np.dot(a_c, M[jj] * n[jj]) + n[jj] * b_c * u.P_dot - fH
            return out

        step = 1e-20
        for j in range(S):
            T_c = T.astype(complex).copy()
            T_c[j] += 1j * step
            col = aeb_vec(T_c, xC.astype(complex)).imag / step
            for jj in range(S):
                J[row_aeb(jj), oe_T + j] = col[jj]
            xC_c = xC.astype(complex).copy()
            xC_c[j] += 1j * step
            col = aeb_vec(T.astype(complex), xC_c).imag / step
            for jj in range(S):
                J[row_aeb(jj), oe_xC + j] = col[jj]

        # ydef rows
        for j in range(S):
            for i in range(C):
                r = oe_y + j * C + i
                J[r, oe_y + j * C + i] = 1.0
                J[r, oe_T + j] = -dfv_T[j, i]
                J[r, oe_xC + j] = -dfv_x[j, i, C - 1]
        # edef rows (H algebraic here)
        oed = oe_H
        for j in range(S):
            r = oed + j
            J[r, oe_H + j] = 1.0
            J[r, oe_T + j] = -n[j] * dhl_T[j]
            J[r, oe_xC + j] = -n[j] * hliq[j, C - 1]
        # ysum rows
        oys = 2 * S + S * C
        for j in range(S):
            r = oys + j
            J[r, oe_T + j] = dfv_T[j].sum()
            J[r, oe_xC + j] = dfv_x[j, :, C - 1].sum()
        # xsum rows
        oxs = 3 * S + S * C
        for j in range(S):
            J[oxs + j, oe_xC + j] = 1.0
        # hold rows
        ohd = 4 * S + S * C
        coeff = self.cfg.holdup.coefficient
        for j in range(S - 1):
            J[ohd + j, oe_L + j] = -coeff
        return J

    def index2_structure_report(self, xi_orig, eta_orig, u: ControlInput) -> dict:
        """Zero rows/columns of the original system's algebraic Jacobian."""
        J = self._jacobian_alg_original(xi_orig, eta_orig, u)
        eq = self.equation_labels(KIND_ORIGINAL)
        var = self.variable_labels(KIND_ORIGINAL)
        zero_rows = [eq[r] for r in range(J.shape[0]) if not J[r].any()]
        zero_cols = [var[c] for c in range(J.shape[1]) if not J[:, c].any()]
        return {"zero_rows": zero_rows, "zero_cols": zero_cols,
                "n_zero_rows": len(zero_rows), "n_zero_cols": len(zero_cols)}

    def structure_report(self, kind: str, J: np.ndarray) -> dict:
        eq = self.equation_labels(kind)
        var = self.variable_labels(kind)
        zero_rows = [eq[r] for r in range(J.shape[0]) if not J[r].any()]
        zero_cols = [var[c] for c in range(J.shape[1]) if not J[:, c].any()]
        return {"zero_rows": zero_rows, "zero_cols": zero_cols,
                "n_zero_rows": len(zero_rows), "n_zero_cols": len(zero_cols)}

    # ------------------------------------------------------------------
    # consistency (solve g = 0 for the algebraic variables at fixed xi)

    def solve_algebraic(self, xi, u: ControlInput,
                        delta: PerturbationSet | None = None,
                        eta_guess: np.ndarray | None = None,
                        bracket: tuple[float, float] | None = None) -> np.ndarray:
        """Solve the perturbed algebraic equations for eta given xi.

        Exploits the triangular structure: x_C from the liquid summations,
        T from the enthalpy definitions (scalar Newton per stage), y from
        the equilibrium definitions, L from the holdup equations, V from
        the auxiliary equations swept bottom-up.  Requires eps > 0 (the
        head auxiliary equation does not determine V^S at total reflux).
        """
        dims = self.dims
        S, C = dims.S, dims.C
        if delta is None:
            delta = self.cfg.delta(C)
        d = delta.values
        n, xhat, H = dims.split_xi(np.asarray(xi, float))
        self._check_n(n)
        if u.epsilon == 0.0:
            raise DegenerateStateError("algebraic solve needs eps > 0 at the head stage")
        xC = 1.0 - xhat.sum(axis=1)
        x = self._full_x(xhat, xC)
        sys = self.sys

        if eta_guess is not None:
            _, _, T0, _, _ = dims.split_eta(np.asarray(eta_guess, float))
            T = np.array(T0, float)
        else:
            T = np.full(S, 350.0)
        # stage temperatures from H^j = n^j f_hl(T^j, x^j)
        for j in range(S):
            target = H[j] / n[j]
            Tj = T[j]
            for _ in range(60):
                r = float(sys.f_hl(Tj, x[j])) - target
                dr = float(sys.d_f_hl_dT(Tj, x[j]))
                step = -r / dr
                Tj += step
                if abs(step) < 1e-12 * max(1.0, abs(Tj)):
                    break
            T[j] = Tj
        y = vle_mod.y_vle(sys, u.P, T, x)
        coeff = self.cfg.holdup.coefficient
        L = n[1:] / coeff
        V = np.empty(S)
        num0 = L[0] * np.sum(x[1] - x[0] - d[0])
        V[0] = num0 / np.sum(y[0] - x[0] - d[0])
        for j in range(1, S - 1):
            num = L[j] * np.sum(x[j + 1] - x[j] - d[j]) + V[j - 1] * np.sum(y[j - 1] - x[j] - d[j])
            V[j] = num / np.sum(y[j] - x[j] - d[j])
        V[S - 1] = (V[S - 2] * np.sum(y[S - 2] - x[S - 1] - d[S - 1])
                    / (u.epsilon * np.sum(y[S - 1] - x[S - 1] - d[S - 1])))
        return dims.pack_eta(V, y, T, xC, L)


def _alt_coeffs_complex(sys: ChemSystem, P: float, T, x):
    """alt_coeffs_a_b for complex-valued T/x (complex-step assembly)."""
    Tb = np.atleast_1d(T)
    xb = np.atleast_2d(x)
    y = sys.psat(Tb) / P * np.exp(vle_mod.ln_gamma(sys, Tb, xb)) * xb
    dT = y * (sys.dln_psat_dT(Tb) + vle_mod.dln_gamma_dT(sys, Tb, xb))
    dx = vle_mod.d_fvle_dx(sys, P, Tb, xb)
    denom = dT.sum()
    hliq = sys.h_liq(Tb)[0]
    dhl_dT = np.sum(xb[0] * sys.cp(Tb)[0])
    dsum_dx = dx[0].sum(axis=0)
    dsum_dP = (-y / P).sum()
    a = hliq - dhl_dT * dsum_dx / denom
    b = -dhl_dT * dsum_dP / denom
    return a, b


# ---------------------------------------------------------------------------
# scaling and integrator adapters


@dataclass(frozen=True)
class ColumnScaling:
    """Characteristic magnitudes for Newton iterations on column systems.

    Moles scale with the initial charge, enthalpies with charge times a
    typical molar enthalpy, streams with heat duty over a typical
    vaporization enthalpy, temperatures with 300 K.
    """

    n_scale: float
    H_scale: float
    T_scale: float
    stream_scale: float

    @classmethod
    def for_scenario(cls, n_app0: float, Q0: float) -> "ColumnScaling":
        return cls(n_scale=n_app0, H_scale=n_app0 * 3e4, T_scale=300.0,
                   stream_scale=max(Q0, 1.0) / 3e4)

    def xi(self, dims: ColumnDims) -> np.ndarray:
        S, C = dims.S, dims.C
        return np.concatenate([np.full(S, self.n_scale),
                               np.ones(S * (C - 1)),
                               np.full(S, self.H_scale)])

    def eta(self, dims: ColumnDims) -> np.ndarray:
        S, C = dims.S, dims.C
        return np.concatenate([np.full(S, self.stream_scale), np.ones(S * C),
                               np.full(S, self.T_scale), np.ones(S),
                               np.full(S - 1, self.stream_scale)])

    def eta_relaxed(self, dims: ColumnDims) -> np.ndarray:
        S = dims.S
        e = self.eta(dims)
        return np.concatenate([e[:S], np.ones(S), e[S:]])

    def g(self, dims: ColumnDims) -> np.ndarray:
        S, C = dims.S, dims.C
        aux = np.full(S, self.stream_scale / self.n_scale)
        return np.concatenate([aux, np.ones(S * C), np.full(S, self.H_scale),
                               np.ones(S), np.full(S - 1, self.n_scale)])

    def g_relaxed(self, dims: ColumnDims) -> np.ndarray:
        S = dims.S
        gs = self.g(dims)
        return np.concatenate([gs[:S], np.ones(S), gs[S:]])


class PerturbedColumnDAE:
    """Adapter exposing the perturbed system to the collocation integrator."""

    def __init__(self, model: ColumnModel, u: ControlInput,
                 delta: PerturbationSet | None = None,
                 scaling: ColumnScaling | None = None):
        self.model = model
        self.u = u
        self.delta = delta if delta is not None else model.cfg.delta(model.dims.C)
        self.nxi = model.dims.n_xi
        self.nalg = model.dims.n_eta
        sc = scaling if scaling is not None else ColumnScaling.for_scenario(20.0, u.Q)
        self.xi_scale = sc.xi(model.dims)
        self.alg_scale = sc.eta(model.dims)
        self.g_scale = sc.g(model.dims)
        self.f_scale = None

    def with_controls(self, u: ControlInput) -> "PerturbedColumnDAE":
        out = PerturbedColumnDAE.__new__(PerturbedColumnDAE)
        out.__dict__.update(self.__dict__)
        out.u = u
        return out

    def f(self, t, xi, alg):
        return self.model.residual_perturbed(xi, alg, self.u, self.delta)[0]

    def g(self, t, xi, alg):
        return self.model.residual_perturbed(xi, alg, self.u, self.delta)[1]

    def jac(self, t, xi, alg):
        return self.model.jacobian_perturbed_full(xi, alg, self.u, self.delta)


class RelaxedBvpProblem:
    """Relaxed system with the efflux ratio as a free path variable.

    Algebraic vector is (V, s, y, T, x_C, L); boundary conditions pin the
    path endpoints and the terminal apparatus holdup and composition.
    """

    has_path = True

    def __init__(self, model: ColumnModel, P0: float, Q0: float, T_cond0: float,
                 eps0: float, n_app0: float, x_app0: np.ndarray,
                 scaling: ColumnScaling | None = None, slack_bound: float = 1e-3):
        self.model = model
        self.P0, self.Q0, self.T_cond0, self.eps0 = P0, Q0, T_cond0, eps0
        self.n_app0 = n_app0
        self.x_app0 = np.asarray(x_app0, float)
        self.nxi = model.dims.n_xi
        self.nalg = model.dims.n_eta_relaxed
        sc = scaling if scaling is not None else ColumnScaling.for_scenario(n_app0, Q0)
        self.xi_scale = sc.xi(model.dims)
        self.alg_scale = sc.eta_relaxed(model.dims)
        self.g_scale = sc.g_relaxed(model.dims)
        self.f_scale = None
        S = model.dims.S
        lo = np.full(self.nalg, -np.inf)
        hi = np.full(self.nalg, np.inf)
        lo[S:2 * S] = -slack_bound
        hi[S:2 * S] = slack_bound
        self.alg_bounds = (lo, hi)
        self.bc_scale = np.concatenate([[1.0, 1.0, n_app0],
                                        np.ones(model.dims.C - 1)])

    def _u(self, p: float) -> ControlInput:
        return ControlInput(epsilon=min(max(p, 0.0), 1.0), P=self.P0, Q=self.Q0,
                            T_cond=self.T_cond0)

    def _split(self, alg):
        dims = self.model.dims
        S = dims.S
        V, s, y, T, xC, L = dims.split_eta_relaxed(np.asarray(alg, float))
        eta = dims.pack_eta(V, y, T, xC, L)
        return eta, s

    def f(self, t, xi, alg, p):
        eta, s = self._split(alg)
        return self.model.residual_relaxed(xi, eta, s, self._u(p))[0]

    def g(self, t, xi, alg, p):
        eta, s = self._split(alg)
        return self.model.residual_relaxed(xi, eta, s, self._u(p))[1]

    def jac(self, t, xi, alg, p):
        eta, s = self._split(alg)
        u = self._u(p)
        Jf_xi, Jf_eta, Jg_xi, Jg_eta = self.model.jacobian_relaxed_full(xi, eta, s, u)
        f_p, g_p = self.model.control_derivatives_relaxed(xi, eta, s, u)
        return Jf_xi, Jf_eta, Jg_xi, Jg_eta, f_p, g_p

    def bc(self, xi0, xiT, p0, pT):
        n_app, x_app = self.model.apparatus_quantities(xiT)
        return np.concatenate([
            [p0 - 0.0, pT - self.eps0, n_app - self.n_app0],
            x_app[:-1] - self.x_app0[:-1],
        ])


def dump_jacobian(path, J: np.ndarray, eq_labels: list[str], var_labels: list[str]) -> None:
    """Dense matrix text dump plus a sparsity-pattern rendering."""
    with open(path, "w") as fh:
        fh.write("# columns: " + " ".join(var_labels) + "\n")
        for r, lab in enumerate(eq_labels):
            fh.write(lab + " " + " ".join(f"{v:.17g}" for v in J[r]) + "\n")
        fh.write("\n# sparsity ('*' nonzero, '.' zero)\n")
        for r, lab in enumerate(eq_labels):
            fh.write(f"{lab:>10s} " + "".join("*" if v != 0.0 else "." for v in J[r]) + "\n")

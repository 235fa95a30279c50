"""NRTL activity coefficients, extended-Raoult vapor fractions, bubble points.

The equilibrium map is y_i = Psat_i(T)/P * gamma_i(T, x) * x_i with NRTL
activity coefficients (tau_ij = a_ij + b_ij/T, G_ij = exp(-alpha*tau_ij),
tau_ii = 0).  Analytic partial derivatives of the map with respect to T,
x and P are provided; they are what the algebraicized enthalpy balances of
the vapor-summation index reduction require.

All evaluations broadcast over stages: T of shape (S,) with x of shape
(S, C) yields (S, C) results.  Scalar T with x of shape (C,) yields (C,).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import thermo
from .thermo import ComponentSpec, EnthalpyRef

DEFAULT_ALPHA = 0.3


class SingularDenominatorError(ZeroDivisionError):
    """An NRTL denominator sum_k x_k G_kj vanished."""


class NoBracketError(ValueError):
    """The bubble-point bracket does not enclose a sign change."""


class BubblePointError(RuntimeError):
    """Bubble-point iteration failed to converge."""


@dataclass(frozen=True)
class NrtlParams:
    """Binary interaction parameters keyed by 0-based component pair (i, j), i < j.

    Each value is (a_ij, b_ij, a_ji, b_ji) with b in K; alpha is the common
    non-randomness parameter.
    """

    n_components: int
    pairs: Mapping[tuple[int, int], tuple[float, float, float, float]]
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        C = self.n_components
        want = {(i, j) for i in range(C) for j in range(i + 1, C)}
        have = set(self.pairs)
        if have != want:
            raise ValueError(f"NRTL pair coverage incomplete: missing {want - have}, extra {have - want}")

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (a, b) as C x C matrices with zero diagonals."""
        C = self.n_components
        a = np.zeros((C, C))
        b = np.zeros((C, C))
        for (i, j), (aij, bij, aji, bji) in self.pairs.items():
            a[i, j], b[i, j] = aij, bij
            a[j, i], b[j, i] = aji, bji
        return a, b


@dataclass
class ChemSystem:
    """Ordered component list plus NRTL interaction parameters."""

    components: Sequence[ComponentSpec]
    nrtl: NrtlParams
    enthalpy_ref: EnthalpyRef = field(default_factory=EnthalpyRef)
    R: float = thermo.GAS_CONSTANT

    def __post_init__(self):
        if len(self.components) < 2:
            raise ValueError("need at least 2 components")
        if self.nrtl.n_components != len(self.components):
            raise ValueError("NRTL parameter dimension does not match component count")
        self._ant = thermo.antoine_table(self.components)
        self._dip = thermo.dippr_table(self.components)
        self._a, self._b = self.nrtl.matrices()
        self._alpha = self.nrtl.alpha

    @property
    def C(self) -> int:
        return len(self.components)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.components]

    def subsystem(self, names: Sequence[str]) -> "ChemSystem":
        """Extract the subsystem for the given component names, pairs restricted."""
        idx = [self.names.index(n) for n in names]
        comps = [self.components[k] for k in idx]
        pairs = {}
        for p in range(len(idx)):
            for q in range(p + 1, len(idx)):
                i, j = idx[p], idx[q]
                if i < j:
                    pairs[(p, q)] = self.nrtl.pairs[(i, j)]
                else:
                    aji, bji, aij, bij = self.nrtl.pairs[(j, i)]
                    pairs[(p, q)] = (aij, bij, aji, bji)
        return ChemSystem(comps, NrtlParams(len(idx), pairs, self.nrtl.alpha),
                          self.enthalpy_ref, self.R)

    # thermodynamic submodels over stage batches -------------------------------
    def psat(self, T):
        return thermo.psat_table(self._ant, T)

    def dln_psat_dT(self, T):
        return thermo.dln_psat_dT_table(self._ant, T)

    def cp(self, T):
        return thermo.cp_table(self._dip, T)

    def h_liq(self, T):
        return thermo.h_liq_table(self._dip, T, self.enthalpy_ref.T_ref)

    def h_vap(self, T):
        return thermo.h_vap_table(self._ant, self._dip, T, self.enthalpy_ref.T_ref, self.R)

    def dh_vap_dT(self, T):
        T_arr = np.asarray(T, dtype=float)[..., None]
        return self.cp(T) + self.R * (
            2.0 * T_arr * thermo.dln_psat_dT_table(self._ant, T)
            + T_arr**2 * thermo.d2ln_psat_dT2_table(self._ant, T)
        )

    def f_hl(self, T, x):
        """Liquid molar mixture enthalpy, J/mol."""
        return np.sum(thermo.as_float_array(x) * self.h_liq(T), axis=-1)

    def f_hv(self, T, y):
        """Vapor molar mixture enthalpy, J/mol."""
        return np.sum(thermo.as_float_array(y) * self.h_vap(T), axis=-1)

    def d_f_hl_dT(self, T, x):
        return np.sum(np.asarray(x, float) * self.cp(T), axis=-1)

    def d_f_hv_dT(self, T, y):
        return np.sum(np.asarray(y, float) * self.dh_vap_dT(T), axis=-1)


def _tau_G(sys: ChemSystem, T):
    """tau, G and their T-derivatives, shape T.shape + (C, C)."""
    T = thermo.as_float_array(T)[..., None, None]
    tau = sys._a + sys._b / T
    dtau = -sys._b / T**2
    G = np.exp(-sys._alpha * tau)
    dG = -sys._alpha * dtau * G
    return tau, G, dtau, dG


def _nrtl_terms(sys: ChemSystem, T, x):
    x = np.atleast_2d(thermo.as_float_array(x))
    T_arr = np.atleast_1d(thermo.as_float_array(T))
    tau, G, dtau, dG = _tau_G(sys, T_arr)
    D = np.einsum("sk,skj->sj", x, G)
    if np.any(D == 0.0):
        raise SingularDenominatorError("sum_k x_k G_kj vanished")
    N = np.einsum("sk,skj,skj->sj", x, tau, G)
    E = N / D
    return x, T_arr, tau, G, dtau, dG, D, N, E


def ln_gamma(sys: ChemSystem, T, x):
    """NRTL log activity coefficients."""
    xs, _, tau, G, _, _, D, _, E = _nrtl_terms(sys, T, x)
    W = G * (tau - E[:, None, :]) / D[:, None, :]
    out = E + np.einsum("sj,sij->si", xs, W)
    return out[0] if np.ndim(x) == 1 else out


def gamma(sys: ChemSystem, T, x):
    return np.exp(ln_gamma(sys, T, x))


def dln_gamma_dT(sys: ChemSystem, T, x):
    """Temperature partial of ln_gamma, 1/K."""
    xs, _, tau, G, dtau, dG, D, N, E = _nrtl_terms(sys, T, x)
    Dp = np.einsum("sk,skj->sj", xs, dG)
    Np = np.einsum("sk,skj->sj", xs, dtau * G + tau * dG)
    Ep = (Np - E * Dp) / D
    term = (dG * (tau - E[:, None, :]) + G * (dtau - Ep[:, None, :])) / D[:, None, :] \
        - G * (tau - E[:, None, :]) * (Dp / D**2)[:, None, :]
    out = Ep + np.einsum("sj,sij->si", xs, term)
    return out[0] if np.ndim(x) == 1 else out


def dln_gamma_dx(sys: ChemSystem, T, x):
    """Composition Jacobian of ln_gamma: out[..., i, p] = d ln gamma_i / d x_p."""
    xs, _, tau, G, _, _, D, _, E = _nrtl_terms(sys, T, x)
    tmE = tau - E[:, None, :]                       # (S, i, j) = tau_ij - E_j
    A1 = np.swapaxes(G * tmE / D[:, None, :], 1, 2)  # (S, i, p): G_pi(tau_pi - E_i)/D_i
    A2 = G * tmE / D[:, None, :]                    # (S, i, p): G_ip(tau_ip - E_p)/D_p
    # cross term: sum_j x_j G_ij G_pj (tau_ij + tau_pj - 2 E_j) / D_j^2
    B = np.einsum("sij,spj,sj->sip", G * tmE, G, xs / D**2) \
        + np.einsum("sij,spj,sj->sip", G, G * tmE, xs / D**2)
    out = A1 + A2 - B
    return out[0] if np.ndim(x) == 1 else out


def y_vle(sys: ChemSystem, P: float, T, x):
    """Extended-Raoult vapor fractions: Psat_i/P * gamma_i * x_i."""
    x_arr = thermo.as_float_array(x)
    if x_arr.ndim == 1 and not x_arr.any():
        return np.zeros_like(x_arr)  # linear in x_i
    return sys.psat(T) / P * np.exp(ln_gamma(sys, T, x)) * x_arr


def vle_sum(sys: ChemSystem, P: float, T, x):
    """Sum over components of the equilibrium vapor fractions."""
    return np.sum(y_vle(sys, P, T, x), axis=-1)


def d_fvle_dT(sys: ChemSystem, P: float, T, x):
    """Temperature partial of y_vle."""
    y = y_vle(sys, P, T, x)
    return y * (sys.dln_psat_dT(T) + dln_gamma_dT(sys, T, x))


def d_fvle_dP(sys: ChemSystem, P: float, T, x):
    """Pressure partial of y_vle: -y/P."""
    return -y_vle(sys, P, T, x) / P


def d_fvle_dx(sys: ChemSystem, P: float, T, x):
    """Composition Jacobian: out[..., i, p] = d y_i / d x_p."""
    x_arr = thermo.as_float_array(x)
    k = sys.psat(T) / P * np.exp(ln_gamma(sys, T, x))  # y_i / x_i, finite at x_i = 0
    dlg = dln_gamma_dx(sys, T, x)
    eye = np.eye(sys.C)
    out = k[..., :, None] * (eye + x_arr[..., :, None] * dlg)
    return out


def d_vle_sum_dT(sys: ChemSystem, P: float, T, x):
    return np.sum(d_fvle_dT(sys, P, T, x), axis=-1)


def alt_coeffs_a_b(sys: ChemSystem, P: float, T: float, x):
    """Coefficients (a, b) of the algebraicized enthalpy balances.

    a_i = d_x_i f_hl - d_T f_hl * (sum_k d_x_i y_k)/(sum_k d_T y_k) and
    b = -d_T f_hl * (sum_k d_P y_k)/(sum_k d_T y_k).
    """
    denom = float(d_vle_sum_dT(sys, P, T, x))
    if denom == 0.0:
        raise SingularDenominatorError("sum_i dT f_vle,i vanished")
    dhl_dx = sys.h_liq(T)  # d f_hl / d x_i = pure liquid enthalpies
    dhl_dT = float(sys.d_f_hl_dT(T, x))
    dsum_dx = np.sum(d_fvle_dx(sys, P, T, x), axis=-2)  # sum over k of d y_k/d x_i
    dsum_dP = float(np.sum(d_fvle_dP(sys, P, T, x), axis=-1))
    a = dhl_dx - dhl_dT * dsum_dx / denom
    b = -dhl_dT * dsum_dP / denom
    return a, b


def boiling_temperature(comp: ComponentSpec, P: float,
                        bracket: tuple[float, float] = (200.0, 500.0)) -> float:
    """Pure-component boiling point: Psat(T) = P, bisection-safeguarded Newton.

    Bracket probing bypasses the validity-range gate (the root itself is
    checked by the caller's use of the result).
    """
    lnP = np.log(P)
    ant = thermo.antoine_table([comp])

    def f(T):
        return float(np.log(thermo.psat_table(ant, T))[0]) - lnP

    def df(T):
        return float(thermo.dln_psat_dT_table(ant, T)[0])

    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise NoBracketError(f"{comp.name}: no boiling point in [{lo}, {hi}] K at {P} Pa")
    T = 0.5 * (lo + hi)
    for _ in range(100):
        fT = f(T)
        if abs(fT) < 1e-14:
            break
        if fT > 0:
            hi = T
        else:
            lo = T
        T_new = T - fT / df(T)
        if not (lo < T_new < hi):
            T_new = 0.5 * (lo + hi)
        if abs(T_new - T) < 1e-13 * T:
            T = T_new
            break
        T = T_new
    return float(T)


def default_bracket(sys: ChemSystem, P: float) -> tuple[float, float]:
    """Bubble bracket [min pure boiling - 20, max pure boiling + 20] K."""
    tbs = [boiling_temperature(c, P) for c in sys.components]
    return min(tbs) - 20.0, max(tbs) + 20.0


def bubble_point_T(sys: ChemSystem, P: float, x,
                   bracket: tuple[float, float] | None = None,
                   tol: float = 1e-12, max_iter: int = 100) -> float:
    """Temperature where the vapor summation reaches 1, |vle_sum - 1| <= tol.

    Deterministic bisection-safeguarded Newton on vle_sum(T) - 1 using the
    analytic temperature derivative.
    """
    if bracket is None:
        bracket = default_bracket(sys, P)
    lo, hi = bracket
    x = np.asarray(x, dtype=float)

    def f(T):
        return float(vle_sum(sys, P, T, x)) - 1.0

    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0:
        raise NoBracketError(
            f"vle_sum-1 has no sign change on [{lo:.2f}, {hi:.2f}] K "
            f"(f(lo)={flo:.3g}, f(hi)={fhi:.3g})")
    T = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fT = f(T)
        if abs(fT) <= tol:
            return float(T)
        if (fT > 0) == (fhi > 0):
            hi, fhi = T, fT
        else:
            lo, flo = T, fT
        dfT = float(d_vle_sum_dT(sys, P, T, x))
        T_new = T - fT / dfT if dfT != 0.0 else 0.5 * (lo + hi)
        if not (lo < T_new < hi):
            T_new = 0.5 * (lo + hi)
        T = T_new
    raise BubblePointError(f"no convergence after {max_iter} iterations (|f|={abs(f(T)):.3g})")


def bubble_points(sys: ChemSystem, P: float, xs,
                  bracket: tuple[float, float] | None = None) -> np.ndarray:
    """Bubble temperatures for a batch of compositions (rows of xs)."""
    if bracket is None:
        bracket = default_bracket(sys, P)
    return np.array([bubble_point_T(sys, P, x, bracket) for x in np.atleast_2d(xs)])

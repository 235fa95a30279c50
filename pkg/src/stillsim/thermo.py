"""Pure-component and mixture thermodynamic property models.

Saturation pressure follows the extended Antoine form
``exp(A + B/(C+T) + D*T + E*ln(T) + F*T**G)`` (Pa, T in K), liquid heat
capacity is a DIPPR-100 quartic (J/(mol K)), liquid enthalpy is its exact
antiderivative from a reference temperature, and vaporization enthalpy is
the Clausius-Clapeyron expression R*T^2*dln(Psat)/dT.  Stage holdup is
proportional to the liquid downflow.

All functions are pure and broadcast over temperature arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

# The value printed in the source material's enthalpy model, not CODATA.
GAS_CONSTANT = 8.31  # J/(mol K)

RANGE_MODE_PERMISSIVE = "permissive"
RANGE_MODE_STRICT = "strict"

_range_mode = RANGE_MODE_PERMISSIVE


class ThermoDomainError(ValueError):
    """Raised for evaluations outside the mathematical domain (T <= 0, C+T = 0)."""


class ThermoRangeError(ValueError):
    """Raised in strict mode for evaluations outside a component's validity range."""


def set_range_mode(mode: str) -> None:
    """Select 'strict' (raise) or 'permissive' (log) out-of-range handling."""
    global _range_mode
    if mode not in (RANGE_MODE_PERMISSIVE, RANGE_MODE_STRICT):
        raise ValueError(f"unknown range mode {mode!r}")
    _range_mode = mode


def get_range_mode() -> str:
    return _range_mode


@dataclass(frozen=True)
class ComponentSpec:
    """One pure component: extended Antoine + DIPPR-100 coefficients.

    antoine: (A, B, C, D, E, F, G), Pa/K convention.
    dippr: (C1..C5), J/(mol K) via quartic polynomial in T (K).
    validity: trusted temperature range [Tmin, Tmax] in K.
    """

    name: str
    antoine: tuple[float, ...]
    dippr: tuple[float, ...]
    validity: tuple[float, float] = (250.0, 450.0)

    def __post_init__(self):
        if len(self.antoine) != 7:
            raise ValueError(f"{self.name}: antoine needs 7 coefficients")
        if len(self.dippr) != 5:
            raise ValueError(f"{self.name}: dippr needs 5 coefficients")
        if not self.validity[0] < self.validity[1]:
            raise ValueError(f"{self.name}: empty validity range")


@dataclass(frozen=True)
class HoldupConfig:
    """Holdup model constants: n_ref is the volumetric holdup *fraction*.

    c_holdup = n_ref / (B_ref/3600) with B_ref in m/h; the stage holdup is
    c_holdup * h/(S-1) * L with h the column height above the pot (m) and
    S the stage count.
    """

    n_ref: float = 0.042
    B_ref: float = 5.0
    h: float = 1.0
    S: int = 10

    def __post_init__(self):
        if not 0.0 < self.n_ref < 1.0:
            raise ValueError("n_ref must be a fraction in (0, 1)")
        if self.B_ref <= 0 or self.h <= 0:
            raise ValueError("B_ref and h must be positive")
        if self.S < 2:
            raise ValueError("need at least 2 stages")

    @property
    def c_holdup(self) -> float:
        return self.n_ref / (self.B_ref / 3600.0)

    @property
    def coefficient(self) -> float:
        """Proportionality constant d(holdup)/dL in s."""
        return self.c_holdup * self.h / (self.S - 1)


@dataclass(frozen=True)
class EnthalpyRef:
    """Fixed reference temperature for the liquid-enthalpy integral."""

    T_ref: float = 298.15


def _check_T(comp: ComponentSpec, T) -> None:
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0.0):
        raise ThermoDomainError(f"{comp.name}: temperature must be positive")
    lo, hi = comp.validity
    if np.any(T < lo) or np.any(T > hi):
        if _range_mode == RANGE_MODE_STRICT:
            raise ThermoRangeError(
                f"{comp.name}: T={np.min(T):.2f}..{np.max(T):.2f} K outside "
                f"validity range [{lo}, {hi}] K"
            )
        logger.warning(
            "%s evaluated outside validity range [%g, %g] K", comp.name, lo, hi
        )


def psat(comp: ComponentSpec, T):
    """Saturation pressure in Pa, extended Antoine form."""
    _check_T(comp, T)
    A, B, C, D, E, F, G = comp.antoine
    T = np.asarray(T, dtype=float)
    if np.any(C + T == 0.0):
        raise ThermoDomainError(f"{comp.name}: C + T = 0 in Antoine term")
    out = np.exp(A + B / (C + T) + D * T + E * np.log(T) + F * T**G)
    return float(out) if out.ndim == 0 else out


def dln_psat_dT(comp: ComponentSpec, T):
    """d ln(Psat)/dT in 1/K."""
    _check_T(comp, T)
    A, B, C, D, E, F, G = comp.antoine
    T = np.asarray(T, dtype=float)
    if np.any(C + T == 0.0):
        raise ThermoDomainError(f"{comp.name}: C + T = 0 in Antoine term")
    out = -B / (C + T) ** 2 + D + E / T + F * G * T ** (G - 1.0)
    return float(out) if out.ndim == 0 else out


def d2ln_psat_dT2(comp: ComponentSpec, T):
    """d^2 ln(Psat)/dT^2 in 1/K^2 (needed for vapor-enthalpy derivatives)."""
    _check_T(comp, T)
    A, B, C, D, E, F, G = comp.antoine
    T = np.asarray(T, dtype=float)
    out = 2.0 * B / (C + T) ** 3 - E / T**2 + F * G * (G - 1.0) * T ** (G - 2.0)
    return float(out) if out.ndim == 0 else out


def cp_liquid(comp: ComponentSpec, T):
    """Liquid molar heat capacity in J/(mol K), DIPPR-100 quartic."""
    _check_T(comp, T)
    c1, c2, c3, c4, c5 = comp.dippr
    T = np.asarray(T, dtype=float)
    out = c1 + T * (c2 + T * (c3 + T * (c4 + T * c5)))
    return float(out) if out.ndim == 0 else out


def h_liq_pure(comp: ComponentSpec, T, ref: EnthalpyRef = EnthalpyRef()):
    """Partial molar liquid enthalpy in J/mol: integral of cp from T_ref to T.

    Exact closed form (degree-5 polynomial difference), no quadrature.
    """
    _check_T(comp, T)
    c = comp.dippr
    T = np.asarray(T, dtype=float)

    def antideriv(t):
        return t * (c[0] + t * (c[1] / 2 + t * (c[2] / 3 + t * (c[3] / 4 + t * c[4] / 5))))

    out = antideriv(T) - antideriv(ref.T_ref)
    return float(out) if out.ndim == 0 else out


def h_vaporization(comp: ComponentSpec, T, R: float = GAS_CONSTANT):
    """Vaporization enthalpy in J/mol via Clausius-Clapeyron: R*T^2*dln(Psat)/dT."""
    T = np.asarray(T, dtype=float)
    out = R * T**2 * dln_psat_dT(comp, T)
    return float(out) if out.ndim == 0 else out


def dh_vaporization_dT(comp: ComponentSpec, T, R: float = GAS_CONSTANT):
    """Temperature derivative of the vaporization enthalpy, J/(mol K)."""
    T = np.asarray(T, dtype=float)
    out = R * (2.0 * T * dln_psat_dT(comp, T) + T**2 * d2ln_psat_dT2(comp, T))
    return float(out) if out.ndim == 0 else out


def h_vap_pure(comp: ComponentSpec, T, ref: EnthalpyRef = EnthalpyRef(), R: float = GAS_CONSTANT):
    """Partial molar vapor enthalpy in J/mol: liquid enthalpy + vaporization."""
    return h_liq_pure(comp, T, ref) + h_vaporization(comp, T, R)


def mix_h_liq(components: Sequence[ComponentSpec], T, x, ref: EnthalpyRef = EnthalpyRef()):
    """Liquid molar mixture enthalpy in J/mol: composition dot pure enthalpies."""
    x = np.asarray(x, dtype=float)
    h = np.array([h_liq_pure(c, T, ref) for c in components])
    return float(x @ h)


def mix_h_vap(components: Sequence[ComponentSpec], T, y, ref: EnthalpyRef = EnthalpyRef(), R: float = GAS_CONSTANT):
    """Vapor molar mixture enthalpy in J/mol."""
    y = np.asarray(y, dtype=float)
    h = np.array([h_vap_pure(c, T, ref, R) for c in components])
    return float(y @ h)


def d_mix_h_liq_dT(components: Sequence[ComponentSpec], T, x):
    """Temperature derivative of the liquid mixture enthalpy: sum x_i cp_i."""
    x = np.asarray(x, dtype=float)
    cp = np.array([cp_liquid(c, T) for c in components])
    return float(x @ cp)


def holdup(L, cfg: HoldupConfig):
    """Stage liquid holdup in mol for downflow L in mol/s (linear model)."""
    L = np.asarray(L, dtype=float)
    if not np.all(np.isfinite(L)):
        raise ValueError("liquid downflow must be finite")
    out = cfg.coefficient * L
    return float(out) if out.ndim == 0 else out


def holdup_derivative(cfg: HoldupConfig) -> float:
    """d(holdup)/dL, constant for the proportional model."""
    return cfg.coefficient


# ---------------------------------------------------------------------------
# Vectorized kernels over component tables, used by the VLE and column code.
# Coefficient tables have one row per component.  Complex input is passed
# through so callers can use complex-step differentiation.

def as_float_array(v) -> np.ndarray:
    """float64 ndarray, except complex input is kept complex."""
    a = np.asarray(v)
    return a if np.iscomplexobj(a) else np.asarray(a, dtype=float)


def antoine_table(components: Sequence[ComponentSpec]) -> np.ndarray:
    return np.array([c.antoine for c in components], dtype=float)


def dippr_table(components: Sequence[ComponentSpec]) -> np.ndarray:
    return np.array([c.dippr for c in components], dtype=float)


def psat_table(ant: np.ndarray, T):
    """Psat for all components; T broadcasts, result shape T.shape + (C,)."""
    T = as_float_array(T)[..., None]
    A, B, C, D, E, F, G = (ant[:, k] for k in range(7))
    return np.exp(A + B / (C + T) + D * T + E * np.log(T) + F * T**G)


def dln_psat_dT_table(ant: np.ndarray, T):
    T = as_float_array(T)[..., None]
    A, B, C, D, E, F, G = (ant[:, k] for k in range(7))
    return -B / (C + T) ** 2 + D + E / T + F * G * T ** (G - 1.0)


def d2ln_psat_dT2_table(ant: np.ndarray, T):
    T = as_float_array(T)[..., None]
    A, B, C, D, E, F, G = (ant[:, k] for k in range(7))
    return 2.0 * B / (C + T) ** 3 - E / T**2 + F * G * (G - 1.0) * T ** (G - 2.0)


def cp_table(dip: np.ndarray, T):
    T = as_float_array(T)[..., None]
    c1, c2, c3, c4, c5 = (dip[:, k] for k in range(5))
    return c1 + T * (c2 + T * (c3 + T * (c4 + T * c5)))


def h_liq_table(dip: np.ndarray, T, T_ref: float):
    T = as_float_array(T)[..., None]
    c = [dip[:, k] for k in range(5)]

    def antideriv(t):
        return t * (c[0] + t * (c[1] / 2 + t * (c[2] / 3 + t * (c[3] / 4 + t * c[4] / 5))))

    return antideriv(T) - antideriv(T_ref)


def h_vap_table(ant: np.ndarray, dip: np.ndarray, T, T_ref: float, R: float = GAS_CONSTANT):
    """Vapor molar enthalpies for all components at T."""
    T_arr = as_float_array(T)[..., None]
    return h_liq_table(dip, T, T_ref) + R * T_arr**2 * dln_psat_dT_table(ant, T)

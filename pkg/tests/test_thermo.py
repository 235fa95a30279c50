import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from stillsim import thermo
from stillsim.thermo import (ComponentSpec, EnthalpyRef, HoldupConfig,
                             ThermoDomainError, ThermoRangeError)

from conftest import make_component

P_ATM = 101330.0


def bisect_root(f, lo, hi, iters=100):
    """Independent bisection oracle."""
    flo = f(lo)
    assert flo * f(hi) < 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if flo * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestPsat:
    def test_acetone_boiling_point_by_bisection(self, components):
        acetone = components["acetone"]
        # oracle: plain-math Antoine with Table coefficients, bisection on [250, 400]
        A, B, _, _, E, F, G = 69.006, -5599.6, 0.0, 0.0, -7.0985, 6.2237e-6, 2.0
        A, E = 69.006, -7.0985

        def f(T):
            return math.exp(A + B / T + E * math.log(T) + F * T**G) - P_ATM

        Tb = bisect_root(f, 250.0, 400.0)
        assert Tb == pytest.approx(329.2880077, abs=1e-4)
        assert thermo.psat(acetone, Tb) == pytest.approx(P_ATM, rel=1e-9)

    def test_constant_exponent(self):
        comp = make_component(antoine=(1.0, 0, 0, 0, 0, 0, 1.0))
        for T in (10.0, 300.0, 1234.5):
            assert thermo.psat(comp, T) == pytest.approx(math.e, rel=1e-15)

    def test_strictly_increasing_on_grid(self, components):
        T = np.arange(280.0, 361.0)
        for comp in components.values():
            p = thermo.psat(comp, T)
            assert np.all(np.diff(p) > 0), comp.name

    def test_domain_errors(self, components):
        with pytest.raises(ThermoDomainError):
            thermo.psat(components["acetone"], -5.0)
        comp = make_component(antoine=(1.0, 1.0, -300.0, 0, 0, 0, 1.0))
        with pytest.raises(ThermoDomainError):
            thermo.psat(comp, 300.0)


class TestDlnPsat:
    def test_closed_form_b_only(self):
        comp = make_component(antoine=(2.0, -150.0, 0, 0, 0, 0, 1.0))
        T = 320.0
        assert thermo.dln_psat_dT(comp, T) == pytest.approx(150.0 / T**2, rel=1e-14)

    def test_power_rule(self):
        comp = make_component(antoine=(0, 0, 0, 0, 0, 1.0, 2.0))
        assert thermo.dln_psat_dT(comp, 7.0) == pytest.approx(14.0, rel=1e-14)

    def test_finite_difference(self, components):
        acetone = components["acetone"]
        T, h = 330.0, 1e-4
        fd = (math.log(thermo.psat(acetone, T + h)) - math.log(thermo.psat(acetone, T - h))) / (2 * h)
        assert thermo.dln_psat_dT(acetone, T) == pytest.approx(fd, rel=1e-6)

    def test_second_derivative_fd(self, components):
        for comp in components.values():
            T, h = 340.0, 1e-3
            fd = (thermo.dln_psat_dT(comp, T + h) - thermo.dln_psat_dT(comp, T - h)) / (2 * h)
            assert thermo.d2ln_psat_dT2(comp, T) == pytest.approx(fd, rel=1e-6)


class TestCpLiquid:
    def test_positive_for_all_components(self, components):
        T = np.arange(280.0, 401.0)
        for comp in components.values():
            assert np.all(thermo.cp_liquid(comp, T) > 0), comp.name

    def test_constant(self):
        comp = make_component(dippr=(1.0, 0, 0, 0, 0))
        assert thermo.cp_liquid(comp, 313.0) == 1.0

    def test_acetone_table_values(self, components):
        # direct evaluation of the tabulated quartic at 300 K
        expect = 135.6 + 300 * -0.177 + 300**2 * 0.00028367 + 300**3 * 6.89e-7
        assert thermo.cp_liquid(components["acetone"], 300.0) == pytest.approx(expect, rel=1e-14)


class TestLiquidEnthalpy:
    def test_zero_at_reference(self, components):
        ref = EnthalpyRef(298.15)
        for comp in components.values():
            assert thermo.h_liq_pure(comp, 298.15, ref) == 0.0

    def test_constant_cp(self):
        comp = make_component(dippr=(7.0, 0, 0, 0, 0))
        ref = EnthalpyRef(300.0)
        assert thermo.h_liq_pure(comp, 350.0, ref) == pytest.approx(7.0 * 50.0, rel=1e-14)

    def test_quadrature_oracle(self, components):
        acetone = components["acetone"]
        ref = EnthalpyRef(298.15)
        expect, _ = quad(lambda t: thermo.cp_liquid(acetone, t), 298.15, 330.0)
        assert thermo.h_liq_pure(acetone, 330.0, ref) == pytest.approx(expect, rel=1e-8)

    def test_quadrature_random_pairs(self, components):
        rng = np.random.default_rng(7)
        comps = list(components.values())
        for _ in range(100):
            comp = comps[rng.integers(len(comps))]
            T_ref, T = rng.uniform(260.0, 440.0, size=2)
            got = thermo.h_liq_pure(comp, T, EnthalpyRef(T_ref))
            expect, _ = quad(lambda t: thermo.cp_liquid(comp, t), T_ref, T)
            assert got == pytest.approx(expect, rel=1e-8, abs=1e-8)


class TestVaporization:
    def test_b_only_constant(self):
        comp = make_component(antoine=(2.0, -500.0, 0, 0, 0, 0, 1.0))
        for T in (300.0, 350.0):
            assert thermo.h_vaporization(comp, T) == pytest.approx(thermo.GAS_CONSTANT * 500.0, rel=1e-14)

    def test_positive_at_case_conditions(self, components):
        assert thermo.h_vaporization(components["acetone"], 329.0) > 0
        for comp in components.values():
            T = np.arange(280.0, 401.0)
            assert np.all(thermo.h_vaporization(comp, T) > 0), comp.name

    def test_finite_difference(self, components):
        acetone = components["acetone"]
        for T in np.linspace(290.0, 380.0, 10):
            h = 1e-4
            fd = (math.log(thermo.psat(acetone, T + h)) - math.log(thermo.psat(acetone, T - h))) / (2 * h)
            assert thermo.h_vaporization(acetone, T) == pytest.approx(
                thermo.GAS_CONSTANT * T**2 * fd, rel=1e-6)

    def test_h_vap_pure_is_sum(self, components):
        methanol = components["methanol"]
        ref = EnthalpyRef()
        assert thermo.h_vap_pure(methanol, 340.0, ref) == pytest.approx(
            thermo.h_liq_pure(methanol, 340.0, ref) + thermo.h_vaporization(methanol, 340.0), rel=1e-14)


class TestMixtures:
    def test_unit_vector(self, components):
        comps = [components["acetone"], components["methanol"]]
        ref = EnthalpyRef()
        assert thermo.mix_h_liq(comps, 320.0, [1.0, 0.0], ref) == pytest.approx(
            thermo.h_liq_pure(comps[0], 320.0, ref), rel=1e-14)

    def test_zero_vector(self, components):
        comps = [components["acetone"], components["methanol"]]
        assert thermo.mix_h_liq(comps, 320.0, [0.0, 0.0]) == 0.0

    def test_equimolar_mean(self, components):
        comps = [components["acetone"], components["methanol"]]
        ref = EnthalpyRef()
        ha = thermo.h_liq_pure(comps[0], 320.0, ref)
        hm = thermo.h_liq_pure(comps[1], 320.0, ref)
        assert thermo.mix_h_liq(comps, 320.0, [0.5, 0.5], ref) == pytest.approx(0.5 * (ha + hm), rel=1e-14)

    def test_d_mix_h_liq_dT(self, components):
        comps = [components["acetone"], components["methanol"], components["butanol"]]
        x = [0.3, 0.5, 0.2]
        got = thermo.d_mix_h_liq_dT(comps, 330.0, x)
        expect = sum(xi * thermo.cp_liquid(c, 330.0) for xi, c in zip(x, comps))
        assert got == pytest.approx(expect, rel=1e-14)
        h = 1e-3
        fd = (thermo.mix_h_liq(comps, 330.0 + h, x) - thermo.mix_h_liq(comps, 330.0 - h, x)) / (2 * h)
        assert got == pytest.approx(fd, rel=1e-6)

    def test_mix_h_vap(self, components):
        comps = [components["acetone"], components["methanol"]]
        got = thermo.mix_h_vap(comps, 335.0, [0.25, 0.75])
        expect = 0.25 * thermo.h_vap_pure(comps[0], 335.0) + 0.75 * thermo.h_vap_pure(comps[1], 335.0)
        assert got == pytest.approx(expect, rel=1e-14)


class TestHoldup:
    def test_zero(self):
        cfg = HoldupConfig(S=10)
        assert thermo.holdup(0.0, cfg) == 0.0

    def test_stated_constants(self):
        # n_ref = 4.2 %, B_ref = 5 m/h, h = 1 m, S = 10 -> 3.36 s per mol/s
        cfg = HoldupConfig(n_ref=0.042, B_ref=5.0, h=1.0, S=10)
        assert cfg.c_holdup == pytest.approx(30.24, rel=1e-12)
        assert thermo.holdup(1.0, cfg) == pytest.approx(3.36, rel=1e-12)
        assert thermo.holdup_derivative(cfg) == pytest.approx(3.36, rel=1e-12)

    @given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3),
           st.floats(-10, 10), st.floats(-10, 10))
    def test_linearity(self, L, M, a, b):
        cfg = HoldupConfig(S=10)
        got = thermo.holdup(a * L + b * M, cfg)
        assert got == pytest.approx(a * thermo.holdup(L, cfg) + b * thermo.holdup(M, cfg),
                                    rel=1e-9, abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            HoldupConfig(n_ref=4.2, S=10)  # percent passed as fraction
        with pytest.raises(ValueError):
            HoldupConfig(S=1)


class TestRangeModes:
    def test_strict_raises(self, components):
        thermo.set_range_mode("strict")
        try:
            with pytest.raises(ThermoRangeError):
                thermo.psat(components["acetone"], 200.0)
        finally:
            thermo.set_range_mode("permissive")

    def test_permissive_logs(self, components, caplog):
        thermo.set_range_mode("permissive")
        with caplog.at_level(logging.WARNING, logger="stillsim.thermo"):
            thermo.psat(components["acetone"], 200.0)
        assert any("validity range" in r.message for r in caplog.records)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            thermo.set_range_mode("lenient")

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stillsim import data, thermo, vle
from stillsim.vle import ChemSystem, NrtlParams, NoBracketError

from conftest import binary_system, make_component

P_ATM = 101330.0


def ideal_system(components, names=("acetone", "methanol")):
    comps = [components[n] for n in names]
    pairs = {(i, j): (0.0, 0.0, 0.0, 0.0)
             for i in range(len(comps)) for j in range(i + 1, len(comps))}
    return ChemSystem(comps, NrtlParams(len(comps), pairs))


def random_simplex(rng, C):
    v = rng.uniform(0.05, 1.0, size=C)
    return v / v.sum()


class TestLnGamma:
    def test_ideal_mixture_is_zero(self, components):
        sys_i = ideal_system(components)
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = random_simplex(rng, 2)
            assert np.allclose(vle.ln_gamma(sys_i, rng.uniform(280, 400), x), 0.0)

    def test_pure_component_normalization(self, mix1_ref):
        for i in range(3):
            x = np.zeros(3)
            x[i] = 1.0
            lg = vle.ln_gamma(mix1_ref, 330.0, x)
            assert lg[i] == pytest.approx(0.0, abs=1e-15)
            assert np.all(np.isfinite(lg))

    def test_binary_edge_reduction(self, mix1_ref):
        # on an edge the full-system values for the two present components
        # equal the extracted binary's values, to machine precision
        names = mix1_ref.names
        for (i, j) in ((0, 1), (0, 2), (1, 2)):
            sub = mix1_ref.subsystem([names[i], names[j]])
            for t in (0.0, 0.2, 0.5, 0.77, 1.0):
                x_full = np.zeros(3)
                x_full[i], x_full[j] = t, 1.0 - t
                lg_full = vle.ln_gamma(mix1_ref, 335.0, x_full)
                lg_sub = vle.ln_gamma(sub, 335.0, np.array([t, 1.0 - t]))
                assert lg_full[i] == pytest.approx(lg_sub[0], rel=1e-13, abs=1e-13)
                assert lg_full[j] == pytest.approx(lg_sub[1], rel=1e-13, abs=1e-13)

    @settings(max_examples=30, deadline=None)
    @given(t=st.floats(0.01, 0.99), T=st.floats(300.0, 380.0))
    def test_edge_reduction_property(self, t, T):
        sys3 = data.load_system("mixture1")
        sub = sys3.subsystem(["acetone", "butanol"])
        x_full = np.array([t, 0.0, 1.0 - t])
        lg_full = vle.ln_gamma(sys3, T, x_full)
        lg_sub = vle.ln_gamma(sub, T, np.array([t, 1.0 - t]))
        assert lg_full[0] == pytest.approx(lg_sub[0], rel=1e-13, abs=1e-13)
        assert lg_full[2] == pytest.approx(lg_sub[1], rel=1e-13, abs=1e-13)

    def test_edge_value_depends_only_on_pair_params(self, mix1_ref, mix1_alt1):
        # mix1_alt1 changes only pair {1,2}; the {1,3} edge must be unaffected
        x = np.array([0.4, 0.0, 0.6])
        assert np.allclose(vle.ln_gamma(mix1_ref, 350.0, x)[[0, 2]],
                           vle.ln_gamma(mix1_alt1, 350.0, x)[[0, 2]])

    def test_batched_matches_scalar(self, mix1_ref):
        rng = np.random.default_rng(1)
        T = rng.uniform(300, 380, size=4)
        X = np.array([random_simplex(rng, 3) for _ in range(4)])
        batch = vle.ln_gamma(mix1_ref, T, X)
        for k in range(4):
            assert np.allclose(batch[k], vle.ln_gamma(mix1_ref, T[k], X[k]), rtol=1e-14)


class TestYVle:
    def test_pure_component_at_boiling(self, components):
        sysb = binary_system(components["acetone"], components["methanol"],
                             data.pair_params("mixture1", (0, 1), "ref"))
        Tb = vle.boiling_temperature(components["acetone"], P_ATM)
        y = vle.y_vle(sysb, P_ATM, Tb, np.array([1.0, 0.0]))
        assert y[0] == pytest.approx(1.0, rel=1e-9)
        assert y[1] == 0.0

    def test_zero_composition(self, mix1_ref):
        assert np.all(vle.y_vle(mix1_ref, P_ATM, 330.0, np.zeros(3)) == 0.0)

    def test_bubble_point_sums_to_one(self, acetone_methanol):
        x = np.array([0.5, 0.5])
        T = vle.bubble_point_T(acetone_methanol, P_ATM, x)
        assert vle.vle_sum(acetone_methanol, P_ATM, T, x) == pytest.approx(1.0, abs=1e-12)


class TestBubblePoint:
    def test_pure_reduces_to_psat_root(self, acetone_methanol, components):
        T = vle.bubble_point_T(acetone_methanol, P_ATM, np.array([1.0, 0.0]))
        assert T == pytest.approx(vle.boiling_temperature(components["acetone"], P_ATM), abs=1e-9)

    def test_bisection_oracle(self, acetone_methanol):
        x = np.array([0.5, 0.5])
        lo, hi = 309.0, 358.0
        f = lambda T: float(vle.vle_sum(acetone_methanol, P_ATM, T, x)) - 1.0
        flo = f(lo)
        assert flo * f(hi) < 0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if flo * f(mid) <= 0:
                hi = mid
            else:
                lo, flo = mid, f(mid)
        oracle = 0.5 * (lo + hi)
        got = vle.bubble_point_T(acetone_methanol, P_ATM, x)
        assert got == pytest.approx(oracle, abs=1e-9)
        assert abs(f(got)) <= 1e-12

    def test_zeotropic_monotone_consistency(self, acetone_butanol, components):
        T_light = vle.bubble_point_T(acetone_butanol, P_ATM, np.array([1.0, 0.0]))
        T_mid = vle.bubble_point_T(acetone_butanol, P_ATM, np.array([0.5, 0.5]))
        T_heavy = vle.bubble_point_T(acetone_butanol, P_ATM, np.array([0.0, 1.0]))
        assert T_light <= T_mid <= T_heavy

    def test_deterministic(self, acetone_methanol):
        x = np.array([0.31, 0.69])
        a = vle.bubble_point_T(acetone_methanol, P_ATM, x)
        b = vle.bubble_point_T(acetone_methanol, P_ATM, x)
        assert a == b  # bit-for-bit

    def test_no_bracket_error(self, acetone_methanol):
        with pytest.raises(NoBracketError):
            vle.bubble_point_T(acetone_methanol, P_ATM, np.array([0.5, 0.5]), bracket=(400.0, 450.0))


class TestDerivatives:
    def fd_check(self, got, fd, rel=1e-6):
        assert got == pytest.approx(fd, rel=rel, abs=1e-10 * max(1.0, abs(fd)))

    def test_ideal_dT(self, components):
        sys_i = ideal_system(components)
        x = np.array([0.4, 0.6])
        T = 330.0
        got = vle.d_fvle_dT(sys_i, P_ATM, T, x)
        ps = sys_i.psat(T)
        dps = ps * sys_i.dln_psat_dT(T)
        assert np.allclose(got, dps / P_ATM * x, rtol=1e-12)

    def test_dP_closed_form(self, mix1_ref):
        x = np.array([0.3, 0.5, 0.2])
        y = vle.y_vle(mix1_ref, P_ATM, 340.0, x)
        assert np.allclose(vle.d_fvle_dP(mix1_ref, P_ATM, 340.0, x), -y / P_ATM, rtol=1e-14)

    def test_fd_agreement_random_points(self, mix1_ref):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = random_simplex(rng, 3)
            T = rng.uniform(310.0, 380.0)
            hT = 1e-5 * T
            fdT = (vle.y_vle(mix1_ref, P_ATM, T + hT, x) - vle.y_vle(mix1_ref, P_ATM, T - hT, x)) / (2 * hT)
            gotT = vle.d_fvle_dT(mix1_ref, P_ATM, T, x)
            assert np.allclose(gotT, fdT, rtol=1e-6, atol=1e-12)

            gotx = vle.d_fvle_dx(mix1_ref, P_ATM, T, x)
            for p in range(3):
                dx = np.zeros(3)
                dx[p] = 1e-7
                fdx = (vle.y_vle(mix1_ref, P_ATM, T, x + dx) - vle.y_vle(mix1_ref, P_ATM, T, x - dx)) / 2e-7
                assert np.allclose(gotx[:, p], fdx, rtol=1e-6, atol=1e-10)

            hP = 1.0
            fdP = (vle.y_vle(mix1_ref, P_ATM + hP, T, x) - vle.y_vle(mix1_ref, P_ATM - hP, T, x)) / (2 * hP)
            assert np.allclose(vle.d_fvle_dP(mix1_ref, P_ATM, T, x), fdP, rtol=1e-6, atol=1e-16)

    def test_ln_gamma_derivatives_fd(self, mix1_ref):
        rng = np.random.default_rng(4)
        for _ in range(20):
            x = random_simplex(rng, 3)
            T = rng.uniform(310.0, 380.0)
            hT = 1e-4
            fd = (vle.ln_gamma(mix1_ref, T + hT, x) - vle.ln_gamma(mix1_ref, T - hT, x)) / (2 * hT)
            assert np.allclose(vle.dln_gamma_dT(mix1_ref, T, x), fd, rtol=1e-6, atol=1e-10)
            got = vle.dln_gamma_dx(mix1_ref, T, x)
            for p in range(3):
                dx = np.zeros(3)
                dx[p] = 1e-7
                fdx = (vle.ln_gamma(mix1_ref, T, x + dx) - vle.ln_gamma(mix1_ref, T, x - dx)) / 2e-7
                assert np.allclose(got[:, p], fdx, rtol=1e-6, atol=1e-8)


class TestAltCoeffs:
    def test_b_zero_when_cp_zero(self, components):
        # synthetic pair with zero heat capacity: d_T f_hl = 0 forces b = 0
        c1 = make_component("z1", antoine=components["acetone"].antoine, dippr=(0, 0, 0, 0, 0))
        c2 = make_component("z2", antoine=components["methanol"].antoine, dippr=(0, 0, 0, 0, 0))
        sysz = binary_system(c1, c2, (0.1, 20.0, -0.1, 30.0))
        a, b = vle.alt_coeffs_a_b(sysz, P_ATM, 330.0, np.array([0.5, 0.5]))
        assert b == 0.0

    def test_formula_assembly(self, mix1_ref):
        # reconstruct from the published defining formulas using the
        # derivative operations directly
        x = np.array([0.3, 0.5, 0.2])
        T = 340.0
        a, b = vle.alt_coeffs_a_b(mix1_ref, P_ATM, T, x)
        denom = float(np.sum(vle.d_fvle_dT(mix1_ref, P_ATM, T, x)))
        dhl_dx = mix1_ref.h_liq(T)
        dhl_dT = float(mix1_ref.d_f_hl_dT(T, x))
        num_x = np.sum(vle.d_fvle_dx(mix1_ref, P_ATM, T, x), axis=0)
        num_P = float(np.sum(vle.d_fvle_dP(mix1_ref, P_ATM, T, x)))
        assert np.allclose(a, dhl_dx - dhl_dT * num_x / denom, rtol=1e-10)
        assert b == pytest.approx(-dhl_dT * num_P / denom, rel=1e-10)

    def test_fd_reconstruction(self, mix1_ref):
        # a and b reproduce the total derivative of f_hl along the manifold
        # sum_i y_i = const; verify against finite differences of the pieces
        x = np.array([0.25, 0.45, 0.3])
        T = 345.0
        a, b = vle.alt_coeffs_a_b(mix1_ref, P_ATM, T, x)
        h = 1e-6
        dsum_dx_fd = np.empty(3)
        for p in range(3):
            dx = np.zeros(3)
            dx[p] = h
            dsum_dx_fd[p] = (vle.vle_sum(mix1_ref, P_ATM, T, x + dx)
                             - vle.vle_sum(mix1_ref, P_ATM, T, x - dx)) / (2 * h)
        dsum_dT_fd = (vle.vle_sum(mix1_ref, P_ATM, T + 1e-4, x)
                      - vle.vle_sum(mix1_ref, P_ATM, T - 1e-4, x)) / 2e-4
        dhl_dT = float(mix1_ref.d_f_hl_dT(T, x))
        expect_a = mix1_ref.h_liq(T) - dhl_dT * dsum_dx_fd / dsum_dT_fd
        assert np.allclose(a, expect_a, rtol=1e-5)


class TestAzeotropeFlags:
    def grid_bubble(self, sysb, n=101):
        ts = np.linspace(0.0, 1.0, n)
        return np.array([vle.bubble_point_T(sysb, P_ATM, np.array([t, 1 - t])) for t in ts])

    def test_acetone_methanol_azeotropic(self, acetone_methanol):
        T = self.grid_bubble(acetone_methanol)
        interior_min = T[1:-1].min()
        assert interior_min < min(T[0], T[-1]) - 1e-6

    def test_methanol_butanol_zeotropic(self, components):
        sysb = binary_system(components["methanol"], components["butanol"],
                             data.pair_params("mixture1", (1, 2), "ref"))
        T = self.grid_bubble(sysb)
        assert np.all(np.diff(T) < 0) or np.all(np.diff(T) > 0)

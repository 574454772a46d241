import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from hjhom.cell import (CellConfig, CellParams, long_time_average, regime_of,
                        regularity_audit, regularity_sweep_audit,
                        spectral_cell_above_one, vanishing_discount_sweep)
from hjhom.grid import GridFunction
from hjhom.hamiltonians import coefficient, model_bpm
from hjhom.kernels import constant_kernel, drift_vector, tilt_kernel
from hjhom.operators import spectral_flap

FAST = CellConfig(n=128, tol=1e-9)
DELTAS = (0.1, 0.05, 0.025, 0.0125)


def eikonal_root(p: float) -> float:
    """Classical 1-D oracle: periodic solvability of |psi'|^2 = c + cos(2 pi y)."""
    if abs(p) <= 2.0 * np.sqrt(2.0) / np.pi:
        return 1.0
    F = lambda c: quad(lambda y: np.sqrt(c + np.cos(2 * np.pi * y)), 0.0, 1.0,
                       limit=200)[0] - abs(p)
    return brentq(F, 1.0, abs(p) ** 2 + 2.0, xtol=1e-12)


class TestRegimes:
    def test_dispatch(self):
        assert regime_of(0.5) == "below_one"
        assert regime_of(1.0) == "equal_one"
        assert regime_of(1.5) == "above_one"


class TestSlowDataIsExact:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
    def test_constant_cell_data(self, sigma):
        # y-independent data: psi = 0 and the constant is -a l + H(x, p), for
        # every discount, with zero spread
        ham = model_bpm("constant:2.0", "constant:0.3", 2.0)
        params = CellParams(x=0.0, p=0.7, l=0.4, sigma=sigma,
                            a=coefficient("constant:1.5"), ham=ham)
        sol = vanishing_discount_sweep(params, DELTAS, FAST)
        expect = -1.5 * 0.4 + 2.0 * 0.7 ** 2 - 0.3
        assert sol.H_bar == pytest.approx(expect, abs=1e-12)
        assert sol.spread <= 1e-12
        assert sol.psi.sup_norm() <= 1e-12
        for d, lo, hi in sol.delta_trace:
            assert lo == pytest.approx(expect, abs=1e-12)
            assert hi == pytest.approx(expect, abs=1e-12)


class TestEikonalCell:
    def test_flat_piece_value(self, eikonal_ham, unit_a):
        params = CellParams(x=0.0, p=0.0, l=0.0, sigma=0.5, a=unit_a, ham=eikonal_ham)
        sol = vanishing_discount_sweep(params, DELTAS, FAST)
        assert sol.converged
        assert sol.H_bar == pytest.approx(1.0, abs=1e-2)

    def test_corrector_shape_and_lipschitz(self, eikonal_ham, unit_a):
        # the flat-piece corrector is -(sqrt2/pi) sin(pi y) up to a constant,
        # with a single downward kink at the origin and |psi'| <= sqrt 2
        n = 128
        params = CellParams(x=0.0, p=0.0, l=0.0, sigma=0.5, a=unit_a, ham=eikonal_ham)
        sol = vanishing_discount_sweep(params, DELTAS, CellConfig(n=n))
        ys = np.arange(n) / n
        closed = -np.sqrt(2.0) / np.pi * np.sin(np.pi * ys)
        assert sol.psi.values[0] == 0.0
        assert np.max(np.abs(sol.psi.values - closed)) <= 0.05
        assert sol.regularity.lip == pytest.approx(np.sqrt(2.0), abs=0.05)
        assert sol.regularity.osc == pytest.approx(np.sqrt(2.0) / np.pi, abs=0.03)
        # Lipschitz profiles keep every Holder quotient below the slope bound
        for gamma, quotient in sol.regularity.holder:
            assert quotient <= sol.regularity.lip * 0.5 ** (1.0 - gamma) + 1e-9

    def test_beyond_threshold_matches_root(self, eikonal_ham, unit_a):
        params = CellParams(x=0.0, p=1.4, l=0.0, sigma=0.5, a=unit_a, ham=eikonal_ham)
        sol = vanishing_discount_sweep(params, (0.1, 0.01), FAST)
        assert sol.H_bar == pytest.approx(eikonal_root(1.4), abs=1e-2)

    def test_step_budget_exhaustion_is_diagnosed(self, eikonal_ham, unit_a):
        params = CellParams(x=0.0, p=0.0, l=0.0, sigma=0.5, a=unit_a, ham=eikonal_ham)
        sol = vanishing_discount_sweep(params, (0.1,), CellConfig(n=128, max_steps=40))
        assert not sol.converged
        assert sol.residuals[0][1] > 1e-9
        assert sol.residuals[0][2] == 40

    def test_discount_trace_tightens(self, eikonal_ham, unit_a):
        params = CellParams(x=0.0, p=0.0, l=0.0, sigma=0.5, a=unit_a, ham=eikonal_ham)
        sol = vanishing_discount_sweep(params, DELTAS, FAST)
        spreads = [hi - lo for _, lo, hi in sol.delta_trace]
        for a, b in zip(spreads, spreads[1:]):
            assert b <= a + 1e-12


class TestFractionalCell:
    def test_matches_closed_form(self, eikonal_ham, wavy_a):
        params = CellParams(x=0.0, p=1.0, l=0.0, sigma=1.5, a=wavy_a, ham=eikonal_ham)
        sol = vanishing_discount_sweep(params, DELTAS, FAST)
        assert sol.converged
        assert sol.H_bar == pytest.approx(3.0 - np.sqrt(3.0), abs=5e-3)
        assert abs(sol.H_bar - (3.0 - np.sqrt(3.0))) <= sol.spread

    def test_symmetric_kernel_drift_is_inert(self, eikonal_ham, unit_a):
        # drift coefficient of a symmetric density is zero, so forcing it to
        # zero changes nothing
        b = drift_vector(constant_kernel(1.0), tol=1e-10).b
        base = CellParams(x=0.0, p=0.5, l=0.0, sigma=1.0, a=unit_a,
                          ham=eikonal_ham, drift_b=b)
        forced = CellParams(x=0.0, p=0.5, l=0.0, sigma=1.0, a=unit_a,
                            ham=eikonal_ham, drift_b=0.0)
        s1 = vanishing_discount_sweep(base, (0.1, 0.05), FAST)
        s2 = vanishing_discount_sweep(forced, (0.1, 0.05), FAST)
        assert s1.H_bar == pytest.approx(s2.H_bar, abs=1e-10)

    def test_asymmetric_drift_shifts_the_constant(self, eikonal_ham, unit_a):
        b = drift_vector(tilt_kernel(1.0, 0.5), tol=1e-8).b
        with_drift = CellParams(x=0.0, p=0.5, l=0.0, sigma=1.0, a=unit_a,
                                ham=eikonal_ham, drift_b=b)
        without = CellParams(x=0.0, p=0.5, l=0.0, sigma=1.0, a=unit_a,
                             ham=eikonal_ham, drift_b=0.0)
        s1 = vanishing_discount_sweep(with_drift, (0.1, 0.05), FAST)
        s2 = vanishing_discount_sweep(without, (0.1, 0.05), FAST)
        assert abs(s1.H_bar - s2.H_bar) > 1e-3


class TestConstantCoefficientShift:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
    def test_l_dependence_is_exact_shift(self, sigma, eikonal_ham, unit_a):
        sols = {}
        for l in (-1.0, 0.0, 1.0):
            params = CellParams(x=0.0, p=0.5, l=l, sigma=sigma, a=unit_a,
                                ham=eikonal_ham)
            sols[l] = vanishing_discount_sweep(params, (0.1, 0.05), FAST)
        for l in (-1.0, 1.0):
            gap = abs(sols[l].H_bar - sols[0.0].H_bar + 1.0 * l)
            assert gap <= 2.0 * max(sols[l].spread, 1e-12)


class TestLongTimeAverage:
    def test_slow_data_exact(self):
        ham = model_bpm("constant:2.0", "constant:0.3", 2.0)
        params = CellParams(x=0.0, p=0.7, l=0.4, sigma=0.5,
                            a=coefficient("constant:1.5"), ham=ham)
        est, err, _ = long_time_average(params, 5.0, FAST)
        assert est == pytest.approx(-1.5 * 0.4 + 2.0 * 0.49 - 0.3, abs=1e-10)
        assert err <= 1e-10

    def test_cross_method_agreement(self, eikonal_ham, unit_a):
        params = CellParams(x=0.0, p=0.0, l=0.0, sigma=0.5, a=unit_a, ham=eikonal_ham)
        sol = vanishing_discount_sweep(params, DELTAS, FAST)
        est, err, _ = long_time_average(params, 60.0, FAST)
        assert abs(est - sol.H_bar) <= sol.spread + err + 1e-6

    def test_fractional_cross_method(self, eikonal_ham, wavy_a):
        params = CellParams(x=0.0, p=1.0, l=0.0, sigma=1.5, a=wavy_a, ham=eikonal_ham)
        est, err, _ = long_time_average(params, 40.0, FAST)
        assert abs(est - (3.0 - np.sqrt(3.0))) <= err + 5e-3


class TestSpectralCell:
    def test_cosine_eigenfunction(self):
        n = 256
        f = GridFunction.from_callable(lambda y: np.cos(2 * np.pi * y), n)
        psi = spectral_cell_above_one(1.5, f)
        expect = (2 * np.pi) ** -1.5 * f.values
        assert np.max(np.abs(psi.values - (expect - expect[0]))) <= 1e-12

    def test_random_right_side_residual(self):
        rng = np.random.default_rng(3)
        n = 256
        y = np.arange(n) / n
        f_vals = sum(rng.normal() * np.cos(2 * np.pi * k * y)
                     + rng.normal() * np.sin(2 * np.pi * k * y) for k in range(1, 6))
        f = GridFunction(f_vals)
        psi = spectral_cell_above_one(1.7, f)
        resid = spectral_flap(psi, 1.7).values - f.values
        assert np.max(np.abs(resid)) <= 1e-10

    def test_nonzero_mean_rejected(self):
        with pytest.raises(ValueError):
            spectral_cell_above_one(1.5, GridFunction.constant(1.0, 64))

    def test_order_domain(self):
        f = GridFunction.from_callable(lambda y: np.cos(2 * np.pi * y), 64)
        with pytest.raises(ValueError):
            spectral_cell_above_one(0.5, f)


class TestRegularityAudit:
    def test_slow_data_gives_zero_ratios(self):
        ham = model_bpm("constant:2.0", "constant:0.3", 2.0)
        params = CellParams(x=0.0, p=0.7, l=0.4, sigma=0.5,
                            a=coefficient("constant:1.5"), ham=ham)
        sol = vanishing_discount_sweep(params, DELTAS, FAST)
        ratios = regularity_audit(sol, params)
        assert ratios.osc <= 1e-10
        assert ratios.lip <= 1e-8
        assert ratios.flap <= 1e-8

    def test_gradient_sweep_trends(self, eikonal_ham, unit_a):
        entries = []
        for p in (1.0, 2.0, 4.0):
            params = CellParams(x=0.0, p=p, l=0.0, sigma=1.0, a=unit_a,
                                ham=eikonal_ham)
            sol = vanishing_discount_sweep(params, (0.1, 0.05), CellConfig(n=128))
            entries.append((params, sol))
        report = regularity_sweep_audit(entries)
        # the Lipschitz ratio trends down; the discounted-sup ratio climbs
        # toward (but stays below) its structural bound of order one
        lips = report["lip"]["series"]
        assert lips[0] > lips[1] > lips[2]
        assert not report["lip"]["growth_flagged"]
        assert max(report["psi_delta"]["series"]) <= 1.05
        assert max(report["flap"]["series"]) == report["flap"]["series"][0]

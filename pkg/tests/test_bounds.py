import numpy as np
import pytest

from pbce.array_model import inner_product_sq
from pbce.bounds import (BoundInputs, ab_difference, cbar_values,
                         cme_asymptotic_mse, convergence_slope, crb_omega,
                         crb_omega_matrix, mismatch_gap, mse_bound_pair,
                         pbce_asymptotic_mse)


def single_path_inputs(noise_var, n_rx=64, rho=64.0, coherence_len=16,
                       cbar_mode="plugin"):
    cbars = cbar_values(n_rx, [rho], noise_var, coherence_len,
                        mode=cbar_mode)
    return BoundInputs(n_rx=n_rx, rhos=[rho], noise_var=noise_var,
                       coherence_len=coherence_len, c_bars=cbars)


class TestCrb:
    def test_closed_form_value(self):
        assert crb_omega(64, 1, 1.0) == pytest.approx(6.0 / 4095, rel=1e-15)

    def test_scaling_in_noise_and_coherence(self):
        assert crb_omega(32, 7, 0.3) == pytest.approx(
            0.3 / 7 * 6.0 / (32 ** 2 - 1), rel=1e-14)

    def test_matrix_evaluation_agrees(self):
        for n in (2, 4, 8, 16, 64):
            matrix = crb_omega_matrix(n, 1, 1.0)
            assert matrix == pytest.approx(6.0 / (n ** 2 - 1), rel=1e-10)

    def test_independent_of_look_angle(self):
        vals = [crb_omega_matrix(16, 1, 1.0, omega=w)
                for w in (-2.5, -0.3, 0.0, 1.1, 3.0)]
        assert max(vals) - min(vals) < 1e-10 * vals[0]

    def test_input_validation(self):
        with pytest.raises(ValueError):
            crb_omega(1, 1, 1.0)
        with pytest.raises(ValueError):
            crb_omega(8, 1, 0.0)


class TestCbarValues:
    def test_plugin_formula(self):
        out = cbar_values(64, [40.0, 24.0], 0.01, 16)
        rhos = np.array([40.0, 24.0])
        want = 6 * 0.01 * (rhos + 0.01) / (16 * 64 ** 2 * rhos ** 2)
        np.testing.assert_allclose(out, want, rtol=1e-14)

    def test_exact_mean_rescales_plugin(self):
        plugin = cbar_values(32, [10.0], 0.1, 8)
        exact = cbar_values(32, [10.0], 0.1, 8, mode="exact_mean")
        np.testing.assert_allclose(exact, plugin * 8 / 7, rtol=1e-14)

    def test_exact_mean_diverges_at_single_snapshot(self):
        with pytest.raises(ValueError, match="coherence_len >= 2"):
            cbar_values(32, [10.0], 0.1, 1, mode="exact_mean")

    def test_zero_mode(self):
        out = cbar_values(32, [10.0, 0.0], 0.1, 8, mode="zero")
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_vanishing_gain_rejected_outside_zero_mode(self):
        with pytest.raises(ValueError, match="positive"):
            cbar_values(32, [10.0, 0.0], 0.1, 8)

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="mode"):
            cbar_values(32, [10.0], 0.1, 8, mode="median")


class TestBoundInputs:
    def test_properties(self):
        inp = single_path_inputs(0.01)
        assert inp.num_paths == 1
        assert inp.beam_factor == 64 ** 2 / 24.0
        assert inp.crb == pytest.approx(crb_omega(64, 16, 0.01), rel=1e-15)
        assert inp.shrinkages()[0] == pytest.approx(64.0 / 64.01, rel=1e-15)

    def test_noise_free_crb_is_zero(self):
        inp = BoundInputs(n_rx=64, rhos=[64.0], noise_var=0.0,
                          coherence_len=16, c_bars=[0.0])
        assert inp.crb == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            BoundInputs(n_rx=64, rhos=[-1.0], noise_var=0.1,
                        coherence_len=16, c_bars=[0.0])
        with pytest.raises(ValueError, match="vanish"):
            BoundInputs(n_rx=64, rhos=[0.0], noise_var=0.0,
                        coherence_len=16, c_bars=[0.0])
        with pytest.raises(ValueError):
            BoundInputs(n_rx=64, rhos=[1.0, 2.0], noise_var=0.1,
                        coherence_len=16, c_bars=[0.0])


class TestMseExpressions:
    def test_noise_free_estimation_is_exact(self):
        inp = BoundInputs(n_rx=64, rhos=[64.0], noise_var=0.0,
                          coherence_len=16, c_bars=[0.0])
        assert pbce_asymptotic_mse(inp) == (0.0, 0.0)
        assert cme_asymptotic_mse(inp) == (0.0, 0.0)

    def test_bounds_coincide_without_posterior_width(self):
        inp = single_path_inputs(0.01, cbar_mode="zero")
        assert cme_asymptotic_mse(inp) == pbce_asymptotic_mse(inp)

    def test_gap_identity(self):
        cbars = cbar_values(64, [40.0, 24.0], 0.01, 16)
        inp = BoundInputs(n_rx=64, rhos=[40.0, 24.0], noise_var=0.01,
                          coherence_len=16, c_bars=cbars)
        numeric = cme_asymptotic_mse(inp)[0] - pbce_asymptotic_mse(inp)[0]
        analytic = ab_difference(inp)
        assert analytic > 0
        # The subtraction cancels two O(n) numbers down to the gap scale.
        assert abs(analytic - numeric) < 1e-8

    def test_nmse_is_mse_over_array_size(self):
        inp = single_path_inputs(0.05)
        mse, nmse = cme_asymptotic_mse(inp)
        assert nmse == pytest.approx(mse / 64, rel=1e-15)

    def test_nmse_grows_with_noise(self):
        nmses = [pbce_asymptotic_mse(single_path_inputs(s))[1]
                 for s in (1e-4, 1e-3, 1e-2, 1e-1, 1.0)]
        assert np.all(np.diff(nmses) > 0)

    def test_frozen_regression_value(self):
        inp = BoundInputs(n_rx=64, rhos=[64.0], noise_var=1e-3,
                          coherence_len=1, c_bars=[0.0])
        mse, nmse = pbce_asymptotic_mse(inp)
        assert mse == pytest.approx(0.0015001064752482307, rel=1e-12)
        assert nmse == pytest.approx(2.3439163675753605e-05, rel=1e-12)

    def test_mismatch_penalty_is_nonnegative(self):
        inp = single_path_inputs(0.01, cbar_mode="zero")
        base = pbce_asymptotic_mse(inp)[0]
        assert pbce_asymptotic_mse(inp, mismatch_eps=0.0)[0] \
            == pytest.approx(base, rel=1e-15)
        for eps in (-0.5, 0.5, 2.0):
            assert pbce_asymptotic_mse(inp, mismatch_eps=eps)[0] > base
        with pytest.raises(ValueError, match="-1"):
            pbce_asymptotic_mse(inp, mismatch_eps=-1.0)


class TestMonteCarloAgreement:
    def test_semi_analytic_draws_match_the_closed_form(self):
        # Independent check of the parametric bound: draw the gain and the
        # asymptotic angle error (variance = CRB over the realized gain
        # power), average the conditional MSE of the rank-1 shrinkage
        # filter, and compare against the closed form.
        n, rho, sig2, T = 64, 64.0, 1e-3, 1
        rng = np.random.default_rng(777)
        M = 20000
        s = rho / (rho + sig2)
        crb = crb_omega(n, T, sig2)
        alphas = np.sqrt(rho / 2) * (rng.standard_normal(M)
                                     + 1j * rng.standard_normal(M))
        abar = np.abs(alphas) ** 2
        deltas = rng.standard_normal(M) * np.sqrt(crb / abar)
        G = np.array([inner_product_sq(0.3, d, n)[0] for d in deltas])
        mc = np.mean(abar * (1 - (2 * s - s ** 2) * G) + sig2 * s ** 2)
        inp = BoundInputs(n_rx=n, rhos=[rho], noise_var=sig2,
                          coherence_len=T, c_bars=[0.0])
        mse = pbce_asymptotic_mse(inp)[0]
        assert mc == pytest.approx(mse, rel=0.02)


class TestMismatchGap:
    def test_leading_term_formula(self):
        inp = single_path_inputs(1e-4, cbar_mode="zero")
        out = mismatch_gap(inp, 0.5)
        want = 64.0 ** 2 * (0.5 * 1e-4) ** 2 / (64.0 + 1e-4) ** 3
        assert out.leading_term == pytest.approx(want, rel=1e-14)

    def test_leading_term_captures_the_gap_at_high_snr(self):
        inp = single_path_inputs(1e-4, cbar_mode="zero")
        out = mismatch_gap(inp, 0.5)
        assert out.gap == pytest.approx(out.leading_term, rel=1e-3)

    def test_epsilon_floor(self):
        inp = single_path_inputs(0.01)
        with pytest.raises(ValueError, match="-1"):
            mismatch_gap(inp, -1.5)


class TestConvergenceSlope:
    def test_bound_gap_decays_quadratically(self):
        pair = mse_bound_pair(64, [64.0], 16)
        grid = np.logspace(-4, -1, 10)
        fit = convergence_slope(pair, grid)
        assert fit.slope == pytest.approx(2.0, abs=0.02)
        assert fit.r_squared > 0.999
        assert fit.points_used == 10

    def test_zero_cbar_pair_coincides(self):
        pair = mse_bound_pair(64, [64.0], 16, cbar_mode="zero")
        grid = np.logspace(-4, -1, 6)
        with pytest.warns(RuntimeWarning, match="underflow"):
            with pytest.raises(ValueError, match="vanishes"):
                convergence_slope(pair, grid)

    def test_partial_underflow_shrinks_the_fit(self):
        pair = (lambda s: 1.0 + (s if s > 1e-2 else 0.0), lambda s: 1.0)
        grid = np.logspace(-6, 0, 8)
        with pytest.warns(RuntimeWarning, match="underflow"):
            fit = convergence_slope(pair, grid)
        assert fit.points_used == 3
        assert fit.slope == pytest.approx(1.0, abs=0.05)

    def test_grid_validation(self):
        pair = mse_bound_pair(64, [64.0], 16)
        with pytest.raises(ValueError, match="at least 4"):
            convergence_slope(pair, [1e-3, 1e-2, 1e-1])
        with pytest.raises(ValueError, match="positive"):
            convergence_slope(pair, [-1e-3, 1e-2, 1e-1, 1.0])
        with pytest.raises(ValueError, match="decades"):
            convergence_slope(pair, [1e-3, 2e-3, 4e-3, 8e-3])


class TestBoundPair:
    def test_pair_reproduces_the_direct_expressions(self):
        cme_fn, pbce_fn = mse_bound_pair(64, [40.0, 24.0], 16)
        cbars = cbar_values(64, [40.0, 24.0], 0.01, 16)
        inp = BoundInputs(n_rx=64, rhos=[40.0, 24.0], noise_var=0.01,
                          coherence_len=16, c_bars=cbars)
        assert cme_fn(0.01) == cme_asymptotic_mse(inp)[0]
        assert pbce_fn(0.01) == pbce_asymptotic_mse(inp)[0]

    def test_cme_dominates_pbce(self):
        cme_fn, pbce_fn = mse_bound_pair(64, [64.0], 16)
        for sig2 in np.logspace(-4, 0, 9):
            assert cme_fn(sig2) > pbce_fn(sig2)

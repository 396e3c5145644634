import numpy as np
import pytest

import pbce.estimators as est
from pbce.array_model import (Scenario, default_prior, observe, sample_prior,
                              steering, steering_matrix)
from pbce.estimators import (BartlettEstimate, EstimationFailure,
                             GenieChannelEstimator,
                             ParametricChannelEstimator, bartlett_estimate,
                             conditional_lmmse_filter, estimate_gains,
                             estimate_parameters, genie_lmmse, pbce_estimate,
                             root_music)


def exact_cov(omegas, rhos, noise_var, n):
    A = steering_matrix(np.atleast_1d(omegas), n)
    return (A * np.atleast_1d(rhos)) @ A.conj().T + noise_var * np.eye(n)


class TestBartlett:
    def test_noiseless_recovery(self):
        C = exact_cov(0.7, 4.0, 0.0, 32)
        out = bartlett_estimate(C, 32)
        assert isinstance(out, BartlettEstimate)
        assert not out.degenerate
        assert abs(out.omega_hat - 0.7) < 1e-4

    def test_noisy_covariance_still_close(self):
        C = exact_cov(-1.3, 2.0, 0.5, 32)
        out = bartlett_estimate(C, 32)
        assert abs(out.omega_hat + 1.3) < 1e-3

    def test_refine_tightens_the_grid_error(self):
        C = exact_cov(0.31, 1.0, 0.0, 16)
        coarse = bartlett_estimate(C, 16, grid_size=64, refine=False)
        fine = bartlett_estimate(C, 16, grid_size=64, refine=True)
        assert abs(coarse.omega_hat - 0.31) <= 2 * np.pi / 64
        assert abs(fine.omega_hat - 0.31) < abs(coarse.omega_hat - 0.31)

    def test_wraps_near_pi(self):
        C = exact_cov(3.1, 1.0, 0.0, 32)
        out = bartlett_estimate(C, 32)
        assert -np.pi < out.omega_hat <= np.pi
        assert abs(out.omega_hat - 3.1) < 1e-3

    def test_flat_spectrum_is_degenerate(self):
        with pytest.warns(RuntimeWarning, match="flat"):
            out = bartlett_estimate(np.eye(8), 8)
        assert out.degenerate
        assert out.omega_hat == 0.0
        with pytest.warns(RuntimeWarning):
            assert bartlett_estimate(np.zeros((8, 8)), 8).degenerate

    def test_grid_must_oversample(self):
        with pytest.raises(ValueError, match="grid_size"):
            bartlett_estimate(np.eye(8), 8, grid_size=16)

    def test_float_conversion(self):
        assert float(BartlettEstimate(omega_hat=0.25)) == 0.25


class TestRootMusic:
    def test_noiseless_single_path(self):
        C = exact_cov(0.7, 1.0, 0.0, 32)
        omegas = root_music(C, 32, 1)
        assert omegas.shape == (1,)
        assert abs(omegas[0] - 0.7) < 1e-10

    def test_noiseless_two_paths_sorted(self):
        C = exact_cov([-0.9, 1.4], [1.0, 3.0], 0.0, 32)
        omegas = root_music(C, 32, 2)
        np.testing.assert_allclose(omegas, [-0.9, 1.4], atol=1e-10)
        assert omegas[0] < omegas[1]

    def test_noise_floor_does_not_move_the_roots(self):
        # An isotropic noise term shifts every eigenvalue equally, so the
        # subspace split and the roots are unchanged.
        C = exact_cov(0.7, 1.0, 0.25, 32)
        omegas = root_music(C, 32, 1)
        assert abs(omegas[0] - 0.7) < 1e-10

    def test_polish_off_keeps_companion_accuracy(self):
        C = exact_cov(0.7, 1.0, 0.0, 32)
        omegas = root_music(C, 32, 1, polish=False)
        assert abs(omegas[0] - 0.7) < 1e-6

    def test_fb_average_path(self):
        C = exact_cov([-0.9, 1.4], [1.0, 3.0], 0.1, 32)
        omegas = root_music(C, 32, 2, fb_average=True)
        np.testing.assert_allclose(omegas, [-0.9, 1.4], atol=1e-8)

    def test_num_paths_must_fit(self):
        with pytest.raises(ValueError, match="num_paths"):
            root_music(np.eye(4), 4, 4)

    def test_rejects_non_hermitian(self):
        C = np.eye(8, dtype=complex)
        C[0, 1] = 1.0
        with pytest.raises(ValueError, match="[Hh]ermitian"):
            root_music(C, 8, 1)

    def test_no_roots_inside_disk_raises(self, monkeypatch):
        # Q = [[0,1],[1,0]] gives the polynomial z^2 + 1 whose roots sit
        # exactly on the unit circle, leaving no strictly-inside candidate.
        monkeypatch.setattr(est, "_noise_subspace_kernel",
                            lambda C, n, L: np.array([[0.0, 1.0],
                                                      [1.0, 0.0]]))
        with pytest.raises(EstimationFailure, match="inside"):
            root_music(np.eye(2), 2, 1)


class TestEstimateGains:
    def test_exact_readout(self):
        rhos = np.array([2.0, 0.5, 7.0])
        omegas = np.array([-2.0, 0.3, 1.7])
        C = exact_cov(omegas, rhos, 0.25, 64)
        out = estimate_gains(C, omegas, 0.25, 64)
        np.testing.assert_allclose(out, rhos, atol=1e-10)

    def test_negative_estimates_clamp_to_zero(self):
        # Believing in more noise than the covariance contains drives the
        # readout negative; variances must clamp at zero.
        C = 0.1 * np.eye(16)
        out = estimate_gains(C, np.array([0.4]), 1.0, 16)
        assert out[0] == 0.0

    def test_coincident_angles_fail(self):
        C = exact_cov(0.3, 1.0, 0.1, 16)
        with pytest.raises(EstimationFailure, match="rank"):
            estimate_gains(C, np.array([0.3, 0.3]), 0.1, 16)

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="n_rx"):
            estimate_gains(np.eye(8), np.array([0.0]), 0.1, 16)


class TestConditionalLmmse:
    def test_single_path_closed_form(self):
        a = steering(0.4, 32)
        W = conditional_lmmse_filter([0.4], [3.0], 1.0, 32).matrix
        np.testing.assert_allclose(W, 0.75 * np.outer(a, a.conj()),
                                   atol=1e-12)

    def test_eigenvalues_shrink(self):
        W = conditional_lmmse_filter([-1.0, 0.2, 2.0], [5.0, 1.0, 0.1],
                                     0.5, 24).matrix
        np.testing.assert_allclose(W, W.conj().T, atol=1e-12)
        eig = np.linalg.eigvalsh(W)
        assert np.all(eig >= -1e-12)
        assert np.all(eig < 1.0)

    def test_favorable_mode_formula(self):
        omegas = np.array([-1.0, 1.5])
        rhos = np.array([4.0, 1.0])
        W = conditional_lmmse_filter(omegas, rhos, 1.0, 16,
                                     mode="favorable").matrix
        A = steering_matrix(omegas, 16)
        ref = (A * (rhos / (rhos + 1.0))) @ A.conj().T
        np.testing.assert_allclose(W, ref, atol=1e-13)

    def test_modes_agree_for_orthogonal_paths(self):
        # At full-period spacing the steering vectors are orthogonal and
        # the cross terms the favorable form drops are exactly zero.
        omegas = np.array([0.0, 2 * np.pi / 8])
        W_exact = conditional_lmmse_filter(omegas, [2.0, 3.0], 1.0, 8).matrix
        W_fav = conditional_lmmse_filter(omegas, [2.0, 3.0], 1.0, 8,
                                         mode="favorable").matrix
        np.testing.assert_allclose(W_exact, W_fav, atol=1e-12)

    def test_input_validation(self):
        with pytest.raises(ValueError, match="mode"):
            conditional_lmmse_filter([0.0], [1.0], 1.0, 8, mode="fast")
        with pytest.raises(ValueError, match="nonnegative"):
            conditional_lmmse_filter([0.0], [-1.0], 1.0, 8)
        with pytest.raises(ValueError):
            conditional_lmmse_filter([0.0], [1.0], 0.0, 8)
        with pytest.raises(ValueError):
            conditional_lmmse_filter([0.0, 1.0], [1.0], 1.0, 8)


def make_observation(seed=0, n_rx=32, num_paths=1, coherence_len=8,
                     noise_var=0.1):
    scenario = Scenario(n_rx=n_rx, num_paths=num_paths,
                        coherence_len=coherence_len, noise_var=noise_var)
    rng = np.random.default_rng(seed)
    realization = sample_prior(default_prior(), scenario, rng)
    return realization, observe(realization, scenario, rng), scenario


class TestPipelineFunctions:
    def test_genie_is_the_filter_at_truth(self):
        realization, obs, _ = make_observation()
        W = conditional_lmmse_filter(realization.omegas, realization.rhos,
                                     obs.noise_var, 32).matrix
        np.testing.assert_allclose(genie_lmmse(obs, realization),
                                   W @ obs.snapshots[:, -1], atol=1e-14)

    def test_estimate_parameters_rmusic(self):
        realization, obs, _ = make_observation(seed=3)
        params = estimate_parameters(obs, 1)
        assert params.noise_var_used == obs.noise_var
        assert abs(params.omegas_hat[0] - realization.omegas[0]) < 0.05

    def test_bartlett_method_single_path_only(self):
        _, obs, _ = make_observation(seed=3)
        params = estimate_parameters(obs, 1, method="bartlett")
        assert params.omegas_hat.shape == (1,)
        with pytest.raises(ValueError, match="single path"):
            estimate_parameters(obs, 2, method="bartlett")

    def test_unknown_method(self):
        _, obs, _ = make_observation()
        with pytest.raises(ValueError, match="method"):
            estimate_parameters(obs, 1, method="esprit")

    def test_true_rhos_short_circuit(self):
        realization, obs, _ = make_observation(seed=5)
        params = estimate_parameters(obs, 1, true_rhos=realization.rhos)
        np.testing.assert_array_equal(params.rhos_hat, realization.rhos)

    def test_noise_var_override(self):
        _, obs, _ = make_observation()
        params = estimate_parameters(obs, 1, noise_var=0.7)
        assert params.noise_var_used == 0.7

    def test_pbce_estimate_applies_the_filter(self):
        _, obs, _ = make_observation(seed=7)
        params = estimate_parameters(obs, 1)
        W = conditional_lmmse_filter(params.omegas_hat, params.rhos_hat,
                                     params.noise_var_used, 32).matrix
        np.testing.assert_allclose(pbce_estimate(obs, params),
                                   W @ obs.snapshots[:, -1], atol=1e-14)


class TestEstimatorClasses:
    def test_get_set_params_round_trip(self):
        model = ParametricChannelEstimator(num_paths=3, noise_var=0.2,
                                           doa_method="rmusic")
        params = model.get_params()
        assert params["num_paths"] == 3
        assert params["noise_var"] == 0.2
        model.set_params(noise_var=0.5, polish=False)
        assert model.noise_var == 0.5
        assert model.polish is False

    def test_set_params_rejects_unknown(self):
        with pytest.raises(ValueError, match="invalid parameter"):
            ParametricChannelEstimator().set_params(bandwidth=3)

    def test_fit_predict_matches_functional_pipeline(self):
        _, obs, _ = make_observation(seed=11)
        model = ParametricChannelEstimator(num_paths=1,
                                           noise_var=obs.noise_var)
        h_hat = model.fit(obs.snapshots).predict(obs.snapshots)
        params = estimate_parameters(obs, 1)
        np.testing.assert_allclose(h_hat, pbce_estimate(obs, params),
                                   atol=1e-14)
        np.testing.assert_allclose(model.fit_predict(obs.snapshots), h_hat,
                                   atol=1e-15)

    def test_transform_filters_every_snapshot(self):
        _, obs, _ = make_observation(seed=11)
        model = ParametricChannelEstimator(num_paths=1,
                                           noise_var=obs.noise_var)
        out = model.fit(obs.snapshots).transform(obs.snapshots)
        assert out.shape == obs.snapshots.shape
        np.testing.assert_allclose(out[:, -1], model.predict(obs.snapshots),
                                   atol=1e-15)

    def test_perfect_gains_requires_realization(self):
        _, obs, _ = make_observation()
        model = ParametricChannelEstimator(num_paths=1,
                                           noise_var=obs.noise_var,
                                           perfect_gains=True)
        with pytest.raises(ValueError, match="realization"):
            model.fit(obs.snapshots)

    def test_perfect_gains_uses_truth(self):
        realization, obs, _ = make_observation(seed=13)
        model = ParametricChannelEstimator(num_paths=1,
                                           noise_var=obs.noise_var,
                                           perfect_gains=True)
        model.fit(obs.snapshots, realization)
        np.testing.assert_array_equal(model.params_.rhos_hat,
                                      realization.rhos)

    def test_fit_rejects_flat_input(self):
        model = ParametricChannelEstimator()
        with pytest.raises(ValueError, match="2-D"):
            model.fit(np.zeros(16))

    def test_genie_class_matches_function(self):
        realization, obs, _ = make_observation(seed=17)
        model = GenieChannelEstimator(noise_var=obs.noise_var)
        h_hat = model.fit(obs.snapshots, realization).predict(obs.snapshots)
        np.testing.assert_allclose(h_hat, genie_lmmse(obs, realization),
                                   atol=1e-15)
        assert model.get_params() == {"noise_var": obs.noise_var}

"""Parametric Bayesian channel estimation laboratory.

Estimates a multipath SIMO channel on a uniform linear array from a short
block of noisy snapshots, by estimating the path angles and gain variances
and plugging them into the conditional LMMSE filter. Ships the asymptotic
conditional-mean filters this plug-in estimator approximates, the matching
closed-form MSE bounds, and a Monte-Carlo sweep harness with a CLI.
"""

from .array_model import (ChannelRealization, ObservationBlock, PriorSpec,
                          Scenario, default_prior, inner_product_sq,
                          noise_var_from_snr_db, observe, sample_prior,
                          steering, steering_derivative, steering_matrix)
from .bounds import (BoundInputs, MismatchGap, SlopeFit, ab_difference,
                     cbar_values, cme_asymptotic_mse, convergence_slope,
                     crb_omega, crb_omega_matrix, mismatch_gap,
                     pbce_asymptotic_mse, mse_bound_pair)
from .cme import (AsymptoticCmeSpec, ChernoffTail, FlatnessReport,
                  PriorDensity, asymptotic_cme_filter, check_prior_flatness,
                  chernoff_halfwidth, chernoff_tail_mass, omega_pdf,
                  posterior_window_grid, prior_quantile_grid,
                  sample_omegas_iid, sampled_cme_filter, smeared_outer)
from .estimators import (BartlettEstimate, EstimationFailure, Filter,
                         GenieChannelEstimator, ParamEstimate,
                         ParametricChannelEstimator, bartlett_estimate,
                         conditional_lmmse_filter, estimate_gains,
                         estimate_parameters, genie_lmmse, pbce_estimate,
                         root_music)
from .sim_harness import (ESTIMATOR_TAGS, SWEEP_AXES, ConvergenceReport,
                          SweepRecord, SweepSpec, read_results,
                          run_convergence_study, run_single_point, run_sweep,
                          write_results)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticCmeSpec", "BartlettEstimate", "BoundInputs",
    "ChannelRealization", "ChernoffTail", "ConvergenceReport",
    "ESTIMATOR_TAGS", "EstimationFailure", "Filter", "FlatnessReport",
    "GenieChannelEstimator", "MismatchGap", "ObservationBlock",
    "ParamEstimate", "ParametricChannelEstimator", "PriorDensity",
    "PriorSpec", "SWEEP_AXES", "Scenario", "SlopeFit", "SweepRecord",
    "SweepSpec", "ab_difference", "asymptotic_cme_filter",
    "bartlett_estimate", "cbar_values", "check_prior_flatness",
    "chernoff_halfwidth", "chernoff_tail_mass", "cme_asymptotic_mse",
    "conditional_lmmse_filter", "convergence_slope", "crb_omega",
    "crb_omega_matrix", "default_prior", "estimate_gains",
    "estimate_parameters", "genie_lmmse", "inner_product_sq", "mismatch_gap",
    "noise_var_from_snr_db", "observe", "omega_pdf", "pbce_asymptotic_mse",
    "pbce_estimate", "posterior_window_grid", "prior_quantile_grid",
    "read_results", "root_music", "run_convergence_study",
    "run_single_point", "run_sweep", "sample_omegas_iid", "sample_prior",
    "sampled_cme_filter", "smeared_outer", "steering", "steering_derivative",
    "steering_matrix", "mse_bound_pair", "write_results",
]

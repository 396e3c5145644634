"""Fast internal consistency checks behind the `validate` CLI command.

Each check compares an independently computed quantity against a closed
form or an invariant, at tight tolerance, in well under a second. The
``perturb`` hook deliberately corrupts one named check's measurement so the
failure path (and the CLI's nonzero exit) can be demonstrated on demand.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import bounds, cme, estimators, sim_harness
from .array_model import Scenario, default_prior, inner_product_sq, steering


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        # numpy comparison results are not JSON serializable
        self.passed = bool(self.passed)


def _check_steering_norm(perturbed: bool) -> CheckResult:
    worst = 0.0
    for n in (4, 16, 64):
        for w in (-2.0, 0.0, 1.3):
            worst = max(worst, abs(np.linalg.norm(steering(w, n)) - 1.0))
    if perturbed:
        worst += 1e-3
    return CheckResult("steering_norm", worst <= 1e-12,
                       f"max | ||a(w)|| - 1 | = {worst:.3e}, tol 1e-12")


def _check_taylor_gap(perturbed: bool) -> CheckResult:
    exact, approx = inner_product_sq(0.4, 1e-3, 64)
    gap = abs(float(exact) - float(approx))
    if perturbed:
        gap += 1e-3
    return CheckResult("taylor_gap", gap <= 1e-6,
                       f"|exact - quadratic| = {gap:.3e} at delta=1e-3, "
                       f"tol 1e-6")


def _check_crb_consistency(perturbed: bool) -> CheckResult:
    matrix = bounds.crb_omega_matrix(32, 4, 0.5)
    reduced = bounds.crb_omega(32, 4, 0.5)
    rel = abs(matrix - reduced) / reduced
    if perturbed:
        rel += 1e-6
    return CheckResult("crb_consistency", rel <= 1e-10,
                       f"matrix vs closed form rel err = {rel:.3e}, "
                       f"tol 1e-10")


def _check_rmusic_recovery(perturbed: bool) -> CheckResult:
    n, omega = 32, 0.7
    a = steering(omega, n)
    cov = n * np.outer(a, a.conj())
    err = abs(float(estimators.root_music(cov, n, 1)[0]) - omega)
    if perturbed:
        err += 1e-8
    return CheckResult("rmusic_recovery", err <= 1e-10,
                       f"noiseless angle error = {err:.3e}, tol 1e-10")


def _check_bartlett_recovery(perturbed: bool) -> CheckResult:
    n, omega = 32, 0.7
    a = steering(omega, n)
    cov = n * np.outer(a, a.conj())
    est = estimators.bartlett_estimate(cov, n)
    err = abs(est.omega_hat - omega)
    if perturbed:
        err += 1e-2
    return CheckResult("bartlett_recovery", err <= 1e-4,
                       f"noiseless angle error = {err:.3e}, tol 1e-4")


def _check_bound_gap_identity(perturbed: bool) -> CheckResult:
    rhos = np.array([40.0, 24.0])
    inputs = bounds.BoundInputs(
        n_rx=64, rhos=rhos, noise_var=0.05, coherence_len=8,
        c_bars=bounds.cbar_values(64, rhos, 0.05, 8, mode="plugin"))
    numeric = bounds.cme_asymptotic_mse(inputs)[0] \
        - bounds.pbce_asymptotic_mse(inputs)[0]
    closed = bounds.ab_difference(inputs)
    # the subtraction cancels two O(1) numbers down to the gap scale, so
    # allow the identity a few orders above eps
    rel = abs(numeric - closed) / max(abs(closed), 1e-300)
    if perturbed:
        rel += 1e-6
    return CheckResult("bound_gap_identity", rel <= 1e-8,
                       f"closed form vs subtraction rel err = {rel:.3e}, "
                       f"tol 1e-8")


def _check_smeared_quadrature(perturbed: bool) -> CheckResult:
    closed = cme.smeared_outer(0.3, 1e-3, 32, method="closed_form")
    quad = cme.smeared_outer(0.3, 1e-3, 32, method="quadrature")
    err = float(np.max(np.abs(closed - quad)))
    if perturbed:
        err += 1e-9
    return CheckResult("smeared_quadrature", err <= 1e-12,
                       f"max entry gap = {err:.3e}, tol 1e-12")


def _check_prior_mass(perturbed: bool) -> CheckResult:
    mass = cme.PriorDensity.from_angle_mixture(
        default_prior()).quadrature_mass()
    err = abs(mass - 1.0)
    if perturbed:
        err += 1e-4
    return CheckResult("prior_mass", err <= 1e-6,
                       f"|prior mass - 1| = {err:.3e}, tol 1e-6")


def _check_zero_estimator_unity(perturbed: bool) -> CheckResult:
    spec = sim_harness.SweepSpec(
        base=Scenario(n_rx=16, num_paths=1, coherence_len=1, noise_var=1.0,
                      seed=20240),
        sweep_axis="snr_db", axis_values=(0.0,), estimators=("zero",),
        trials=200)
    rec = sim_harness.run_sweep(spec)[0]
    err = abs(rec.nmse_linear - 1.0)
    if perturbed:
        err += 1.0
    limit = 4 * rec.std_err
    return CheckResult("zero_estimator_unity", err <= limit,
                       f"|NMSE - 1| = {err:.3e}, 4 std errs = {limit:.3e}")


def _check_csv_round_trip(perturbed: bool) -> CheckResult:
    records = [
        sim_harness.SweepRecord(axis="snr_db", axis_value=10.0,
                                estimator="zero", nmse_linear=1.0 / 3.0,
                                nmse_db=10 * np.log10(1.0 / 3.0),
                                trials_used=7, failures=1,
                                std_err=0.012345678901234567),
        sim_harness.SweepRecord(axis="snr_db", axis_value=10.0,
                                estimator="genie_lmmse", nmse_linear=0.0,
                                nmse_db=-np.inf, trials_used=8, failures=0,
                                std_err=0.0),
    ]
    fd, path = tempfile.mkstemp(suffix=".csv")
    os.close(fd)
    try:
        sim_harness.write_results(records, path)
        parsed = sim_harness.read_results(path)
    finally:
        os.unlink(path)
    if perturbed and parsed:
        parsed[0].nmse_linear += 1e-12
    want = sorted(records, key=lambda r: (r.axis_value, r.estimator))
    ok = parsed == want
    return CheckResult("csv_round_trip", ok,
                       "parsed records equal written records"
                       if ok else "round trip changed at least one field")


_CHECKS = (
    _check_steering_norm,
    _check_taylor_gap,
    _check_crb_consistency,
    _check_rmusic_recovery,
    _check_bartlett_recovery,
    _check_bound_gap_identity,
    _check_smeared_quadrature,
    _check_prior_mass,
    _check_zero_estimator_unity,
    _check_csv_round_trip,
)

CHECK_NAMES = tuple(fn.__name__.removeprefix("_check_") for fn in _CHECKS)


def run_validation_checks(perturb: str | None = None) -> list[CheckResult]:
    """Run all checks; ``perturb`` corrupts the named one to force a FAIL."""
    if perturb is not None and perturb not in CHECK_NAMES:
        raise ValueError(f"unknown check {perturb!r}; valid names: "
                         f"{', '.join(CHECK_NAMES)}")
    return [fn(perturb == name)
            for fn, name in zip(_CHECKS, CHECK_NAMES)]

"""Monte-Carlo NMSE sweep harness.

A sweep fixes a base scenario, varies one axis (SNR, noise power, coherence
length, array size, or path count), and averages per-trial squared errors
over a fixed trial budget. Every trial draws its own reproducible random
stream from SeedSequence(seed, spawn_key=(sweep_index, trial_index)), so
estimators sharing a trial see the same channel and noise draw, results do
not depend on the worker count, and single-point sweeps at different axis
values can reuse common random numbers by keeping sweep_index = 0.

Records normalize by the array size: NMSE = ||h - h_hat||^2 / n_rx averaged
over trials. Analytic curves (the two asymptotic bounds and the parameter
CRB) ride along as pseudo-estimators evaluated at each trial's true gains,
so they land in the same CSV with the same axis layout.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import multiprocessing
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import bounds, cme, estimators
from ._validation import as_float, as_int
from .array_model import (ChannelRealization, ObservationBlock, Scenario,
                          noise_var_from_snr_db, observe, sample_prior)

SWEEP_AXES = ("snr_db", "noise_var", "coherence_len", "n_rx", "num_paths")

ESTIMATOR_TAGS = (
    "pbce_rmusic",      # parametric estimator, root-MUSIC angles
    "pbce_bartlett",    # parametric estimator, Bartlett angle (single path)
    "genie_lmmse",      # conditional LMMSE at the true parameters
    "asymptotic_cme",   # smeared-filter approximation of the CME
    "sampled_cme",      # grid/sample posterior mixture CME
    "bound_cme_ab",     # asymptotic CME bound (analytic)
    "bound_pbce_ab",    # asymptotic parametric bound (analytic)
    "crb_omega_curve",  # per-path frequency CRB (analytic)
    "zero",             # all-zeros estimate, NMSE == 1 sanity anchor
)

_ANALYTIC_TAGS = frozenset({"bound_cme_ab", "bound_pbce_ab",
                            "crb_omega_curve"})
_SINGLE_PATH_TAGS = frozenset({"pbce_bartlett"})

GRID_MODES = ("window", "quantile", "iid")
CBAR_MODES = ("plugin", "exact_mean", "zero")


@dataclass(frozen=True)
class SweepSpec:
    """Full description of one sweep, picklable for worker processes."""

    base: Scenario
    sweep_axis: str
    axis_values: tuple
    estimators: tuple
    trials: int = 100
    perfect_gains: bool = False
    mismatch_eps: float | None = None
    cbar_mode: str = "plugin"
    cme_samples: int = 512
    cme_grid_mode: str = "window"
    mass_defect: float = 1e-9
    min_separation: float | None = None

    def __post_init__(self):
        if not isinstance(self.base, Scenario):
            raise TypeError("base must be a Scenario")
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.sweep_axis!r}; "
                             f"valid axes: {', '.join(SWEEP_AXES)}")
        values = tuple(float(v) for v in self.axis_values)
        if not values:
            raise ValueError("axis_values must be nonempty")
        if len(values) > 1:
            diffs = np.diff(values)
            if not (np.all(diffs > 0) or np.all(diffs < 0)):
                raise ValueError("axis_values must be strictly monotone")
        object.__setattr__(self, "axis_values", values)
        tags = tuple(self.estimators)
        if not tags:
            raise ValueError("estimators must be nonempty")
        bad = [t for t in tags if t not in ESTIMATOR_TAGS]
        if bad:
            raise ValueError(f"unknown estimator tags {bad}; valid tags: "
                             f"{', '.join(ESTIMATOR_TAGS)}")
        if len(set(tags)) != len(tags):
            raise ValueError("estimator tags must be unique")
        object.__setattr__(self, "estimators", tags)
        object.__setattr__(self, "trials",
                           as_int("trials", self.trials, minimum=1))
        if self.mismatch_eps is not None:
            eps = as_float("mismatch_eps", self.mismatch_eps)
            if eps <= -1:
                raise ValueError("mismatch_eps must be > -1")
            object.__setattr__(self, "mismatch_eps", eps)
        if self.cbar_mode not in CBAR_MODES:
            raise ValueError(f"unknown cbar_mode {self.cbar_mode!r}; valid: "
                             f"{', '.join(CBAR_MODES)}")
        if self.cme_grid_mode not in GRID_MODES:
            raise ValueError(f"unknown cme_grid_mode "
                             f"{self.cme_grid_mode!r}; valid: "
                             f"{', '.join(GRID_MODES)}")
        object.__setattr__(self, "cme_samples",
                           as_int("cme_samples", self.cme_samples, minimum=2))
        defect = as_float("mass_defect", self.mass_defect, positive=True)
        if defect >= 2:
            raise ValueError("mass_defect must be below 2")
        object.__setattr__(self, "mass_defect", defect)
        if self.min_separation is not None:
            object.__setattr__(self, "min_separation",
                               as_float("min_separation", self.min_separation,
                                        nonnegative=True))
        # Tags that only resolve a single path must never meet L > 1.
        if self.sweep_axis == "num_paths":
            max_paths = int(max(values))
        else:
            max_paths = self.base.num_paths
        needs_single = [t for t in tags if t in _SINGLE_PATH_TAGS]
        if self.cme_grid_mode == "window" and "sampled_cme" in tags:
            needs_single.append("sampled_cme (window grid)")
        if max_paths > 1 and needs_single:
            raise ValueError(f"{', '.join(needs_single)} require a single "
                             f"path but the sweep reaches num_paths="
                             f"{max_paths}")

    def scenario_at(self, axis_value: float) -> Scenario:
        return _apply_axis(self.base, self.sweep_axis, axis_value)


def _apply_axis(base: Scenario, axis: str, value: float) -> Scenario:
    if axis == "snr_db":
        return dataclasses.replace(base,
                                   noise_var=noise_var_from_snr_db(value))
    if axis == "noise_var":
        return dataclasses.replace(base, noise_var=float(value))
    if value != int(value):
        raise ValueError(f"axis {axis} takes integer values, got {value!r}")
    return dataclasses.replace(base, **{axis: int(value)})


@dataclass
class SweepRecord:
    """One (axis point, estimator) aggregate; maps 1:1 onto a CSV row."""

    axis: str
    axis_value: float
    estimator: str
    nmse_linear: float
    nmse_db: float
    trials_used: int
    failures: int
    std_err: float


# ---------------------------------------------------------------------------
# Per-trial evaluation


def _draw_digest(realization: ChannelRealization,
                 observation: ObservationBlock) -> str:
    h = hashlib.blake2b(digest_size=16)
    for arr in (realization.omegas, realization.rhos, realization.alphas,
                observation.snapshots):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _bartlett_anchor(observation: ObservationBlock, n: int) -> float:
    est = estimators.bartlett_estimate(observation.sample_cov, n)
    if est.degenerate:
        raise estimators.EstimationFailure("degenerate Bartlett spectrum")
    return est.omega_hat


def _anchor_omegas(observation: ObservationBlock, scenario: Scenario,
                   noise_var: float) -> np.ndarray:
    if scenario.num_paths == 1:
        return np.array([_bartlett_anchor(observation, scenario.n_rx)])
    return estimators.root_music(observation.sample_cov, scenario.n_rx,
                                 scenario.num_paths)


def _sampled_cme_value(spec: SweepSpec, scenario: Scenario,
                       realization: ChannelRealization,
                       observation: ObservationBlock, noise_var: float,
                       rng: np.random.Generator) -> np.ndarray:
    n = scenario.n_rx
    T = scenario.coherence_len
    if spec.cme_grid_mode == "window":
        anchor = _bartlett_anchor(observation, n)
        width_spec = cme.AsymptoticCmeSpec.from_model(
            omega_hats=np.array([anchor]), rhos=realization.rhos,
            noise_var=noise_var, coherence_len=T,
            emp_gain_power=observation.emp_gain_power, n_rx=n)
        omegas, log_prior = cme.posterior_window_grid(
            scenario.prior, anchor, float(width_spec.variances[0]),
            spec.cme_samples, mass_defect=spec.mass_defect)
        samples = [(np.array([w]), realization.rhos) for w in omegas]
    elif spec.cme_grid_mode == "quantile":
        if scenario.num_paths != 1:
            raise estimators.EstimationFailure(
                "quantile grid covers a single path only")
        omegas = cme.prior_quantile_grid(scenario.prior, spec.cme_samples)
        samples = [(np.array([w]), realization.rhos) for w in omegas]
        log_prior = None
    else:  # iid draws of full (omegas, rhos) candidates from the prior
        one_shot = dataclasses.replace(scenario, coherence_len=1)
        samples = []
        for _ in range(spec.cme_samples):
            cand = sample_prior(scenario.prior, one_shot, rng,
                                min_separation=spec.min_separation)
            samples.append((cand.omegas, cand.rhos))
        log_prior = None
    W = cme.sampled_cme_filter(observation.sample_cov, T, noise_var,
                               samples, log_prior_weights=log_prior)
    return W.apply(observation.snapshots[:, -1])


def _run_trial(args) -> dict:
    """Evaluate every requested tag on one shared draw.

    Returns tag -> per-trial NMSE (analytic tags: the curve value), or None
    where the estimator declared failure.
    """
    spec, scenario, sweep_index, trial_index = args
    ss = np.random.SeedSequence(scenario.seed,
                                spawn_key=(sweep_index, trial_index))
    rng = np.random.default_rng(ss)
    realization = sample_prior(scenario.prior, scenario, rng,
                               min_separation=spec.min_separation)
    observation = observe(realization, scenario, rng)
    digest = _draw_digest(realization, observation)
    h_true = realization.channels[:, -1]
    n = scenario.n_rx
    sig2 = scenario.noise_var
    believed = sig2 if spec.mismatch_eps is None \
        else (1 + spec.mismatch_eps) * sig2

    def nmse_of(h_hat: np.ndarray) -> float:
        d = h_true - h_hat
        return float(np.real(d.conj() @ d)) / n

    out = {}
    for tag in spec.estimators:
        try:
            if tag == "zero":
                out[tag] = nmse_of(np.zeros(n, dtype=complex))
            elif tag == "genie_lmmse":
                out[tag] = nmse_of(estimators.genie_lmmse(observation,
                                                          realization))
            elif tag in ("pbce_rmusic", "pbce_bartlett"):
                method = "rmusic" if tag == "pbce_rmusic" else "bartlett"
                params = estimators.estimate_parameters(
                    observation, scenario.num_paths, method=method,
                    true_rhos=realization.rhos if spec.perfect_gains
                    else None,
                    noise_var=believed)
                out[tag] = nmse_of(estimators.pbce_estimate(observation,
                                                            params))
            elif tag == "asymptotic_cme":
                anchors = _anchor_omegas(observation, scenario, sig2)
                cme_spec = cme.AsymptoticCmeSpec.from_model(
                    omega_hats=anchors, rhos=realization.rhos,
                    noise_var=sig2, coherence_len=scenario.coherence_len,
                    emp_gain_power=observation.emp_gain_power, n_rx=n)
                W = cme.asymptotic_cme_filter(cme_spec, n)
                out[tag] = nmse_of(W.apply(observation.snapshots[:, -1]))
            elif tag == "sampled_cme":
                out[tag] = nmse_of(_sampled_cme_value(
                    spec, scenario, realization, observation, sig2, rng))
            elif tag in ("bound_cme_ab", "bound_pbce_ab"):
                inputs = bounds.BoundInputs(
                    n_rx=n, rhos=realization.rhos, noise_var=sig2,
                    coherence_len=scenario.coherence_len,
                    c_bars=bounds.cbar_values(n, realization.rhos, sig2,
                                              scenario.coherence_len,
                                              mode=spec.cbar_mode))
                if tag == "bound_cme_ab":
                    out[tag] = bounds.cme_asymptotic_mse(inputs)[1]
                else:
                    out[tag] = bounds.pbce_asymptotic_mse(
                        inputs, mismatch_eps=spec.mismatch_eps)[1]
            elif tag == "crb_omega_curve":
                out[tag] = bounds.crb_omega(n, scenario.coherence_len, sig2)
            else:  # unreachable: SweepSpec validated the tag set
                raise AssertionError(tag)
        except estimators.EstimationFailure:
            out[tag] = None
    if _draw_digest(realization, observation) != digest:
        raise RuntimeError("an estimator mutated the sampled draw; paired "
                           "comparisons would be invalid")
    return out


# ---------------------------------------------------------------------------
# Sweep driver


def _aggregate(spec: SweepSpec, axis_value: float,
               trial_results: list[dict]) -> list[SweepRecord]:
    records = []
    for tag in spec.estimators:
        vals = np.array([r[tag] for r in trial_results if r[tag] is not None],
                        dtype=float)
        failures = len(trial_results) - vals.size
        if vals.size == 0:
            nmse, nmse_db, std_err = np.nan, np.nan, np.nan
        else:
            nmse = float(vals.mean())
            with np.errstate(divide="ignore"):
                nmse_db = float(10 * np.log10(nmse)) if nmse > 0 else -np.inf
            std_err = float(vals.std(ddof=1) / np.sqrt(vals.size)) \
                if vals.size > 1 else 0.0
        records.append(SweepRecord(axis=spec.sweep_axis,
                                   axis_value=float(axis_value),
                                   estimator=tag, nmse_linear=nmse,
                                   nmse_db=nmse_db,
                                   trials_used=int(vals.size),
                                   failures=int(failures),
                                   std_err=std_err))
    return records


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRecord]:
    """Run the sweep and return one record per (axis point, estimator).

    ``workers`` > 1 fans trials out over a process pool; results are reduced
    in trial order either way, so the records are identical for any worker
    count at a fixed seed.
    """
    workers = as_int("workers", workers, minimum=1)
    records = []
    for sweep_index, value in enumerate(spec.axis_values):
        scenario = spec.scenario_at(value)
        args = [(spec, scenario, sweep_index, t) for t in range(spec.trials)]
        if workers == 1:
            results = [_run_trial(a) for a in args]
        else:
            chunk = max(1, spec.trials // (workers * 8))
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(workers) as pool:
                results = list(pool.imap(_run_trial, args, chunksize=chunk))
        records.extend(_aggregate(spec, value, results))
    return records


def run_single_point(spec: SweepSpec, workers: int = 1) -> list[SweepRecord]:
    """Sweep with exactly one axis point, evaluated at sweep_index 0.

    Separate single-point runs at different axis values share trial streams
    (common random numbers), which pairs their estimator comparisons.
    """
    if len(spec.axis_values) != 1:
        raise ValueError("run_single_point requires exactly one axis value")
    return run_sweep(spec, workers=workers)


@dataclass
class ConvergenceReport:
    """Gap-to-bound summary of a sweep, in axis order."""

    records: list = field(repr=False)
    axis_values: np.ndarray = None
    pbce_nmse: np.ndarray | None = None
    gap_to_pbce_bound: np.ndarray | None = None
    gap_to_cme_bound: np.ndarray | None = None
    gap_monotone_decreasing: bool | None = None
    analytic_slope: bounds.SlopeFit | None = None


def _tag_curve(records: list, tag: str) -> np.ndarray | None:
    vals = [r.nmse_linear for r in records if r.estimator == tag]
    return np.array(vals) if vals else None


def run_convergence_study(spec: SweepSpec, workers: int = 1,
                          fit_slope: bool = True) -> ConvergenceReport:
    """Sweep plus gap-to-bound bookkeeping.

    The empirical gap pairs the parametric estimator with its bound and the
    sampled (or smeared) CME with the conditional-mean bound. On an SNR axis
    with at least 4 points spanning two decades of noise power, the analytic
    bound-gap slope is fitted with the gains pinned at the equal split
    n_rx / num_paths (random gains have no single analytic curve).
    """
    records = run_sweep(spec, workers=workers)
    axis_vals = np.array(spec.axis_values)
    report = ConvergenceReport(records=records, axis_values=axis_vals)

    emp_pbce = _tag_curve(records, "pbce_rmusic")
    if emp_pbce is None:
        emp_pbce = _tag_curve(records, "pbce_bartlett")
    report.pbce_nmse = emp_pbce
    bound_pbce = _tag_curve(records, "bound_pbce_ab")
    if emp_pbce is not None and bound_pbce is not None:
        report.gap_to_pbce_bound = emp_pbce - bound_pbce
        if len(axis_vals) > 1:
            report.gap_monotone_decreasing = bool(
                np.all(np.diff(report.gap_to_pbce_bound) < 0))
    emp_cme = _tag_curve(records, "sampled_cme")
    if emp_cme is None:
        emp_cme = _tag_curve(records, "asymptotic_cme")
    bound_cme = _tag_curve(records, "bound_cme_ab")
    if emp_cme is not None and bound_cme is not None:
        report.gap_to_cme_bound = emp_cme - bound_cme

    if fit_slope and spec.sweep_axis == "snr_db" and len(axis_vals) >= 4:
        grid = np.array([noise_var_from_snr_db(v) for v in axis_vals])
        if grid.max() / grid.min() >= 100:
            L = spec.base.num_paths
            rhos = np.full(L, spec.base.n_rx / L)
            pair = bounds.mse_bound_pair(spec.base.n_rx, rhos,
                                         spec.base.coherence_len,
                                         cbar_mode=spec.cbar_mode)
            report.analytic_slope = bounds.convergence_slope(pair, grid)
    return report


# ---------------------------------------------------------------------------
# CSV round trip

CSV_HEADER = ("axis", "axis_value", "estimator", "nmse_linear", "nmse_db",
              "trials_used", "failures", "std_err")


def write_results(records: list, path: str) -> None:
    """Write records as CSV, sorted by (axis_value, estimator).

    Floats carry 17 significant digits, enough for an exact float64 round
    trip through read_results.
    """
    rows = sorted(records, key=lambda r: (r.axis_value, r.estimator))
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for r in rows:
                writer.writerow([
                    r.axis, format(r.axis_value, ".17g"), r.estimator,
                    format(r.nmse_linear, ".17g"), format(r.nmse_db, ".17g"),
                    r.trials_used, r.failures, format(r.std_err, ".17g"),
                ])
    except OSError as e:
        raise RuntimeError(f"cannot write results to {path!r}: {e}") from e


def read_results(path: str) -> list:
    """Parse a results CSV back into SweepRecord objects."""
    try:
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = tuple(next(reader, ()))
            if header != CSV_HEADER:
                raise ValueError(f"unexpected results header in {path!r}: "
                                 f"{header}")
            records = []
            for row in reader:
                if len(row) != len(CSV_HEADER):
                    raise ValueError(f"malformed row in {path!r}: {row}")
                records.append(SweepRecord(
                    axis=row[0], axis_value=float(row[1]), estimator=row[2],
                    nmse_linear=float(row[3]), nmse_db=float(row[4]),
                    trials_used=int(row[5]), failures=int(row[6]),
                    std_err=float(row[7])))
    except OSError as e:
        raise RuntimeError(f"cannot read results from {path!r}: {e}") from e
    return records

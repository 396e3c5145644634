"""Command-line front end.

Three subcommands:

  sweep     run a Monte-Carlo NMSE sweep (config file and/or flags) and
            print or write the results CSV
  bounds    print the closed-form bound table over an SNR range, with an
            optional log-log gap-slope fit
  validate  run the internal consistency checks

Exit codes: 0 success, 2 configuration error (bad flags, config keys, tag
typos), 3 runtime failure while estimating or writing, 4 validation checks
failed.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys

import numpy as np

from . import bounds, selfcheck
from .array_model import PriorSpec, Scenario, noise_var_from_snr_db
from .sim_harness import (CBAR_MODES, ESTIMATOR_TAGS, GRID_MODES, SWEEP_AXES,
                          SweepSpec, run_sweep, write_results)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_VALIDATION = 4

WORKERS_ENV_VAR = "PBCE_WORKERS"


class ConfigError(Exception):
    """User-facing configuration problem; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Parsing helpers


def parse_value_range(text: str) -> tuple[float, ...]:
    """Parse axis values: 'start:step:stop' (inclusive) or 'a,b,c' or 'a'."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range {text!r} must be start:step:stop")
        try:
            start, step, stop = (float(p) for p in parts)
        except ValueError as e:
            raise ConfigError(f"bad number in range {text!r}: {e}") from e
        if step == 0:
            raise ConfigError("range step must be nonzero")
        if (stop - start) * step < 0:
            raise ConfigError(f"range {text!r} never reaches its stop value")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + k * step for k in range(count))
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as e:
        raise ConfigError(f"bad number in values {text!r}: {e}") from e


def _parse_bool(section: str, key: str, text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key} must be a boolean, got {text!r}")


def _float_list(section: str, key: str, text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: {e}") from e


_CONFIG_KEYS = {
    "scenario": {"n_rx", "num_paths", "coherence_len", "snr_db", "noise_var",
                 "seed"},
    "prior": {"gain_law", "weights", "means_deg", "stds_deg",
              "min_separation"},
    "sweep": {"axis", "values", "trials", "estimators", "perfect_gains",
              "mismatch_eps", "cbar_mode", "cme_samples", "cme_grid_mode",
              "mass_defect"},
    "output": {"path", "workers"},
}


def load_config(path: str) -> dict:
    """Read an INI config into {section: {key: raw string}}.

    Unknown sections and keys are rejected by name so typos cannot be
    silently ignored.
    """
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path!r}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config {path!r}: {e}") from e
    out = {}
    for section in parser.sections():
        if section not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config section [{section}]; valid "
                              f"sections: {', '.join(_CONFIG_KEYS)}")
        out[section] = {}
        for key, value in parser.items(section):
            if key not in _CONFIG_KEYS[section]:
                raise ConfigError(
                    f"unknown key {key!r} in section [{section}]; valid "
                    f"keys: {', '.join(sorted(_CONFIG_KEYS[section]))}")
            out[section][key] = value
    return out


def _build_prior(cfg: dict) -> PriorSpec:
    section = cfg.get("prior", {})
    kwargs = {}
    if "gain_law" in section:
        kwargs["gain_law"] = section["gain_law"].strip()
    mixture_keys = [k for k in ("weights", "means_deg", "stds_deg")
                    if k in section]
    if mixture_keys:
        if len(mixture_keys) != 3:
            raise ConfigError("[prior] weights, means_deg and stds_deg must "
                              "be given together")
        w = _float_list("prior", "weights", section["weights"])
        mu = _float_list("prior", "means_deg", section["means_deg"])
        sd = _float_list("prior", "stds_deg", section["stds_deg"])
        if not (len(w) == len(mu) == len(sd)):
            raise ConfigError("[prior] weights, means_deg and stds_deg must "
                              "have equal length")
        kwargs["angle_mixture"] = tuple(zip(w, mu, sd))
    try:
        return PriorSpec(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad prior: {e}") from e


def _scenario_value(cfg: dict, args, key: str, cast, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    section = cfg.get("scenario", {})
    if key in section:
        try:
            return cast(section[key])
        except ValueError as e:
            raise ConfigError(f"[scenario] {key}: {e}") from e
    return default


def _build_scenario(cfg: dict, args, prior: PriorSpec) -> Scenario:
    section = cfg.get("scenario", {})
    if "snr_db" in section and "noise_var" in section:
        raise ConfigError("[scenario] give snr_db or noise_var, not both")
    noise_var = 1.0
    if "noise_var" in section:
        noise_var = _scenario_value(cfg, args, "noise_var", float, 1.0)
    if "snr_db" in section:
        try:
            noise_var = noise_var_from_snr_db(float(section["snr_db"]))
        except ValueError as e:
            raise ConfigError(f"[scenario] snr_db: {e}") from e
    if getattr(args, "snr_db", None) is not None:
        noise_var = noise_var_from_snr_db(args.snr_db)
    try:
        return Scenario(
            n_rx=_scenario_value(cfg, args, "n_rx", int, 64),
            num_paths=_scenario_value(cfg, args, "num_paths", int, 1),
            coherence_len=_scenario_value(cfg, args, "coherence_len", int, 1),
            noise_var=noise_var,
            prior=prior,
            seed=_scenario_value(cfg, args, "seed", int, 0))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad scenario: {e}") from e


def _sweep_value(cfg: dict, args, key: str, cast, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    section = cfg.get("sweep", {})
    if key in section:
        try:
            return cast(section[key])
        except (ValueError, ConfigError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"[sweep] {key}: {e}") from e
    return default


def _build_sweep_spec(cfg: dict, args) -> SweepSpec:
    prior = _build_prior(cfg)
    base = _build_scenario(cfg, args, prior)
    section = cfg.get("sweep", {})
    axis = args.axis or section.get("axis")
    if axis is None:
        raise ConfigError("no sweep axis given; pass --axis or set "
                          "[sweep] axis")
    values_text = args.values or section.get("values")
    if values_text is None:
        raise ConfigError("no axis values given; pass --values or set "
                          "[sweep] values")
    values = parse_value_range(values_text)
    estimators_text = args.estimators or section.get("estimators")
    if estimators_text is None:
        raise ConfigError("no estimators given; pass --estimators or set "
                          "[sweep] estimators")
    tags = tuple(t.strip() for t in estimators_text.split(",") if t.strip())
    mismatch = _sweep_value(cfg, args, "mismatch_eps", float, None)
    min_sep = None
    if "min_separation" in cfg.get("prior", {}):
        try:
            min_sep = float(cfg["prior"]["min_separation"])
        except ValueError as e:
            raise ConfigError(f"[prior] min_separation: {e}") from e
    try:
        return SweepSpec(
            base=base, sweep_axis=axis, axis_values=values, estimators=tags,
            trials=_sweep_value(cfg, args, "trials", int, 100),
            perfect_gains=_sweep_value(
                cfg, args, "perfect_gains",
                lambda t: _parse_bool("sweep", "perfect_gains", t), False),
            mismatch_eps=mismatch,
            cbar_mode=_sweep_value(cfg, args, "cbar_mode", str.strip,
                                   "plugin"),
            cme_samples=_sweep_value(cfg, args, "cme_samples", int, 512),
            cme_grid_mode=_sweep_value(cfg, args, "cme_grid_mode", str.strip,
                                       "window"),
            mass_defect=_sweep_value(cfg, args, "mass_defect", float, 1e-9),
            min_separation=min_sep)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _resolve_workers(cfg: dict, args) -> int:
    if args.workers is not None:
        return _positive_workers(str(args.workers), "--workers")
    env = os.environ.get(WORKERS_ENV_VAR)
    if env is not None:
        return _positive_workers(env, f"environment variable "
                                      f"{WORKERS_ENV_VAR}")
    section = cfg.get("output", {})
    if "workers" in section:
        return _positive_workers(section["workers"], "[output] workers")
    return 1


def _positive_workers(text: str, origin: str) -> int:
    try:
        value = int(text)
    except ValueError as e:
        raise ConfigError(f"{origin} must be an integer, got {text!r}") from e
    if value < 1:
        raise ConfigError(f"{origin} must be >= 1, got {value}")
    return value


# ---------------------------------------------------------------------------
# Subcommands


def _print_records(records) -> None:
    header = ("axis_value", "estimator", "nmse_linear", "nmse_db",
              "trials", "fail", "std_err")
    rows = [(format(r.axis_value, "g"), r.estimator,
             format(r.nmse_linear, ".6g"), format(r.nmse_db, ".4f"),
             str(r.trials_used), str(r.failures), format(r.std_err, ".3g"))
            for r in sorted(records,
                            key=lambda r: (r.axis_value, r.estimator))]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    spec = _build_sweep_spec(cfg, args)
    workers = _resolve_workers(cfg, args)
    out_path = args.out or cfg.get("output", {}).get("path")
    records = run_sweep(spec, workers=workers)
    if out_path:
        write_results(records, out_path)
        print(f"wrote {len(records)} records to {out_path}")
    else:
        _print_records(records)
    return EXIT_OK


def _cmd_bounds(args) -> int:
    values = parse_value_range(args.snr_db)
    if args.n_rx < 2:
        raise ConfigError("--n-rx must be >= 2")
    if args.num_paths < 1:
        raise ConfigError("--num-paths must be >= 1")
    if args.coherence_len < 1:
        raise ConfigError("--coherence-len must be >= 1")
    rhos = np.full(args.num_paths, args.n_rx / args.num_paths)
    rows = []
    try:
        for snr in values:
            sig2 = noise_var_from_snr_db(snr)
            inputs = bounds.BoundInputs(
                n_rx=args.n_rx, rhos=rhos, noise_var=sig2,
                coherence_len=args.coherence_len,
                c_bars=bounds.cbar_values(args.n_rx, rhos, sig2,
                                          args.coherence_len,
                                          mode=args.cbar_mode))
            nmse_cme = bounds.cme_asymptotic_mse(inputs)[1]
            nmse_pbce = bounds.pbce_asymptotic_mse(inputs)[1]
            rows.append((snr, sig2, nmse_cme, nmse_pbce,
                         nmse_cme - nmse_pbce,
                         bounds.crb_omega(args.n_rx, args.coherence_len,
                                          sig2)))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    print(f"{'snr_db':>8} {'noise_var':>12} {'cme_nmse':>12} "
          f"{'pbce_nmse':>12} {'gap':>12} {'crb_omega':>12}")
    for row in rows:
        print(f"{row[0]:>8g} {row[1]:>12.6g} {row[2]:>12.6g} "
              f"{row[3]:>12.6g} {row[4]:>12.6g} {row[5]:>12.6g}")
    if args.slope:
        grid = np.array([noise_var_from_snr_db(v) for v in values])
        pair = bounds.mse_bound_pair(args.n_rx, rhos,
                                     args.coherence_len,
                                     cbar_mode=args.cbar_mode)
        try:
            fit = bounds.convergence_slope(pair, grid)
        except ValueError as e:
            raise ConfigError(f"cannot fit slope on this grid: {e}") from e
        print(f"gap slope (d log gap / d log noise_var) = {fit.slope:.4f}, "
              f"r^2 = {fit.r_squared:.6f}, points = {fit.points_used}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        results = selfcheck.run_validation_checks(perturb=args.perturb)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if args.json:
        print(json.dumps([dataclasses.asdict(r) for r in results], indent=2))
    else:
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    if all(r.passed for r in results):
        if not args.json:
            print(f"all {len(results)} checks passed")
        return EXIT_OK
    return EXIT_VALIDATION


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbce",
        description="Monte-Carlo laboratory for parametric Bayesian channel "
                    "estimation on a uniform linear array")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run a Monte-Carlo NMSE sweep")
    sweep.add_argument("--config", help="INI file with scenario/prior/sweep/"
                                        "output sections")
    sweep.add_argument("--axis", choices=SWEEP_AXES, help="sweep axis")
    sweep.add_argument("--values",
                       help="axis values: 'start:step:stop' or 'a,b,c'")
    sweep.add_argument("--estimators",
                       help=f"comma list of tags from: "
                            f"{', '.join(ESTIMATOR_TAGS)}")
    sweep.add_argument("--trials", type=int, help="Monte-Carlo trials per "
                                                  "axis point")
    sweep.add_argument("--seed", type=int, help="base RNG seed")
    sweep.add_argument("--n-rx", dest="n_rx", type=int, help="array size")
    sweep.add_argument("--num-paths", dest="num_paths", type=int,
                       help="number of propagation paths")
    sweep.add_argument("--coherence-len", dest="coherence_len", type=int,
                       help="snapshots per coherence block")
    sweep.add_argument("--snr-db", dest="snr_db", type=float,
                       help="base scenario SNR in dB (noise power 10^(-x/10))")
    sweep.add_argument("--perfect-gains", dest="perfect_gains",
                       action="store_const", const=True,
                       help="hand the parametric estimator the true gain "
                            "variances")
    sweep.add_argument("--mismatch-eps", dest="mismatch_eps", type=float,
                       help="relative noise-power mismatch fed to the "
                            "parametric estimator and its bound")
    sweep.add_argument("--cbar-mode", dest="cbar_mode", choices=CBAR_MODES,
                       help="posterior-width constant mode for the CME bound")
    sweep.add_argument("--cme-samples", dest="cme_samples", type=int,
                       help="sample count for the sampled CME")
    sweep.add_argument("--cme-grid-mode", dest="cme_grid_mode",
                       choices=GRID_MODES, help="sampled-CME candidate grid")
    sweep.add_argument("--mass-defect", dest="mass_defect", type=float,
                       help="posterior tail mass allowed outside the window "
                            "grid")
    sweep.add_argument("--out", help="write results CSV here instead of "
                                     "printing a table")
    sweep.add_argument("--workers", type=int,
                       help=f"worker processes (overrides "
                            f"{WORKERS_ENV_VAR} and config)")
    sweep.set_defaults(func=_cmd_sweep)

    bnd = sub.add_parser("bounds", help="print the closed-form bound table")
    bnd.add_argument("--n-rx", dest="n_rx", type=int, default=64)
    bnd.add_argument("--num-paths", dest="num_paths", type=int, default=1)
    bnd.add_argument("--coherence-len", dest="coherence_len", type=int,
                     default=1)
    bnd.add_argument("--snr-db", dest="snr_db", default="-10:5:40",
                     help="SNR range 'start:step:stop' or comma list")
    bnd.add_argument("--cbar-mode", dest="cbar_mode", choices=CBAR_MODES,
                     default="plugin")
    bnd.add_argument("--slope", action="store_true",
                     help="fit the log-log slope of the bound gap over the "
                          "grid")
    bnd.set_defaults(func=_cmd_bounds)

    val = sub.add_parser("validate", help="run internal consistency checks")
    val.add_argument("--perturb", metavar="NAME",
                     help=f"deliberately corrupt one check; names: "
                          f"{', '.join(selfcheck.CHECK_NAMES)}")
    val.add_argument("--json", action="store_true",
                     help="machine-readable results")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError, OSError, np.linalg.LinAlgError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

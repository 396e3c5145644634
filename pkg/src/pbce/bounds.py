"""Closed-form performance bounds.

The per-path parameter CRB, the asymptotic MSE expressions of the
conditional-mean and the parametric estimator, their algebraic gap, the
log-log convergence-slope fit, and the noise-mismatch expansion.

All MSE expressions share one quadratic structure in the per-path
shrinkages s_l = rho_l / (rho_l + sigma^2):

    n - 2 sum_l s_l (rho_l (1 - 2 B cbar_l) - 2 B crb)
      + sum_l s_l^2 (rho_l (1 - 4 B cbar_l) - 2 B crb + sigma^2)

with B = n^2 / 24. The conditional-mean bound keeps the cbar terms (the
mean posterior width of the angle); the parametric bound sets them to zero.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import as_float, as_int, as_vector
from .array_model import steering, steering_derivative


# ---------------------------------------------------------------------------
# Parameter CRB


def crb_omega_matrix(n_rx: int, coherence_len: int, noise_var: float,
                     omega: float = 0.3) -> float:
    """Matrix evaluation of the spatial-frequency CRB.

    sigma^2 / (2T) * [Re{a'^H (I - a a^H)^+ a'}]^{-1}, with the projector
    read as its own pseudo-inverse (the literal inverse is singular).
    The value is independent of omega for a uniform linear array.
    """
    n = as_int("n_rx", n_rx, minimum=2)
    T = as_int("coherence_len", coherence_len, minimum=1)
    sig2 = as_float("noise_var", noise_var, positive=True)
    a = steering(omega, n)
    da = steering_derivative(omega, n)
    proj = np.eye(n) - np.outer(a, a.conj())
    info = float(np.real(da.conj() @ np.linalg.pinv(proj) @ da))
    return sig2 / (2 * T * info)


@lru_cache(maxsize=None)
def _crb_unit_coefficient(n: int) -> float:
    """6 / (n^2 - 1), cross-checked once per array size against the
    matrix evaluation at unit noise and T = 1."""
    reduced = 6.0 / (n ** 2 - 1)
    matrix = crb_omega_matrix(n, 1, 1.0)
    if abs(matrix - reduced) > 1e-10 * reduced:
        raise RuntimeError(
            f"CRB matrix evaluation disagrees with the closed form at "
            f"n_rx={n}: {matrix!r} vs {reduced!r}")
    return reduced


def crb_omega(n_rx: int, coherence_len: int, noise_var: float) -> float:
    """Per-path spatial-frequency CRB, 6 sigma^2 / (T (n^2 - 1))."""
    n = as_int("n_rx", n_rx, minimum=2)
    T = as_int("coherence_len", coherence_len, minimum=1)
    sig2 = as_float("noise_var", noise_var, positive=True)
    return sig2 / T * _crb_unit_coefficient(n)


# ---------------------------------------------------------------------------
# Asymptotic MSE expressions


def cbar_values(n_rx: int, rhos, noise_var: float, coherence_len: int,
                mode: str = "plugin") -> np.ndarray:
    """Mean posterior-width constants entering the conditional-mean bound.

    plugin substitutes the mean gain power (abar -> rho), which stays
    finite for every T. exact_mean multiplies by T / (T - 1), the exact
    mean of 1/abar under exponential per-snapshot gain powers; it diverges
    at T = 1 and is rejected there. zero returns zeros (recovers the
    parametric bound from the conditional-mean expression).
    """
    n = as_int("n_rx", n_rx, minimum=2)
    rhos = as_vector("rhos", rhos)
    sig2 = as_float("noise_var", noise_var, nonnegative=True)
    T = as_int("coherence_len", coherence_len, minimum=1)
    if mode == "zero":
        return np.zeros_like(rhos)
    if np.any(rhos <= 0):
        raise ValueError("rhos must be positive for cbar evaluation")
    plugin = 6 * sig2 * (rhos + sig2) / (T * n ** 2 * rhos ** 2)
    if mode == "plugin":
        return plugin
    if mode == "exact_mean":
        if T < 2:
            raise ValueError("exact_mean requires coherence_len >= 2; the "
                             "mean inverse gain power diverges at T = 1")
        return plugin * T / (T - 1)
    raise ValueError(f"unknown cbar mode {mode!r}")


@dataclass
class BoundInputs:
    """Inputs of the asymptotic MSE expressions."""

    n_rx: int
    rhos: np.ndarray
    noise_var: float
    coherence_len: int
    c_bars: np.ndarray

    def __post_init__(self):
        self.n_rx = as_int("n_rx", self.n_rx, minimum=2)
        self.rhos = as_vector("rhos", self.rhos)
        if np.any(self.rhos < 0):
            raise ValueError("rhos must be nonnegative")
        self.noise_var = as_float("noise_var", self.noise_var,
                                  nonnegative=True)
        if self.noise_var == 0 and np.any(self.rhos == 0):
            raise ValueError("noise_var and rhos cannot both vanish")
        self.coherence_len = as_int("coherence_len", self.coherence_len,
                                    minimum=1)
        self.c_bars = as_vector("c_bars", self.c_bars,
                                length=self.rhos.shape[0])

    @property
    def num_paths(self) -> int:
        return self.rhos.shape[0]

    @property
    def beam_factor(self) -> float:
        """B = n^2 / 24, the curvature constant of the beam main lobe."""
        return self.n_rx ** 2 / 24.0

    @property
    def crb(self) -> float:
        if self.noise_var == 0:
            return 0.0
        return crb_omega(self.n_rx, self.coherence_len, self.noise_var)

    def shrinkages(self) -> np.ndarray:
        return self.rhos / (self.rhos + self.noise_var)


def _quadratic_mse(n: int, rhos: np.ndarray, sig2: float, crb: float,
                   B: float, cbars: np.ndarray,
                   shrink: np.ndarray) -> float:
    lin = rhos * (1 - 2 * B * cbars) - 2 * B * crb
    quad = rhos * (1 - 4 * B * cbars) - 2 * B * crb + sig2
    return float(n - 2 * np.sum(shrink * lin) + np.sum(shrink ** 2 * quad))


def cme_asymptotic_mse(inputs: BoundInputs) -> tuple[float, float]:
    """Asymptotic MSE of the conditional-mean estimator; returns (MSE, NMSE)."""
    mse = _quadratic_mse(inputs.n_rx, inputs.rhos, inputs.noise_var,
                         inputs.crb, inputs.beam_factor, inputs.c_bars,
                         inputs.shrinkages())
    return mse, mse / inputs.n_rx


def pbce_asymptotic_mse(inputs: BoundInputs,
                        mismatch_eps: float | None = None
                        ) -> tuple[float, float]:
    """Asymptotic MSE of the parametric estimator; returns (MSE, NMSE).

    ``mismatch_eps`` evaluates the expression with the shrinkages built
    from the mismatched noise belief (1 + eps) sigma^2 while the physical
    noise power stays put.
    """
    shrink = inputs.shrinkages()
    if mismatch_eps is not None:
        eps = as_float("mismatch_eps", mismatch_eps)
        if eps <= -1:
            raise ValueError("mismatch_eps must be > -1")
        believed = (1 + eps) * inputs.noise_var
        shrink = inputs.rhos / (inputs.rhos + believed)
    mse = _quadratic_mse(inputs.n_rx, inputs.rhos, inputs.noise_var,
                         inputs.crb, inputs.beam_factor,
                         np.zeros_like(inputs.rhos), shrink)
    return mse, mse / inputs.n_rx


def ab_difference(inputs: BoundInputs) -> float:
    """Closed-form gap between the two bounds.

    CME - PBCE = 4 B sum_l rho_l cbar_l s_l (1 - s_l); the regression test
    checks this against the numeric subtraction to machine precision.
    """
    s = inputs.shrinkages()
    return float(4 * inputs.beam_factor
                 * np.sum(inputs.rhos * inputs.c_bars * s * (1 - s)))


# ---------------------------------------------------------------------------
# Convergence slope and mismatch expansion


@dataclass
class SlopeFit:
    """Least-squares line through (log sigma^2, log |gap|)."""

    slope: float
    intercept: float
    r_squared: float
    points_used: int


def convergence_slope(bound_fn_pair, sigma_sq_grid) -> SlopeFit:
    """Fit the log-log decay rate of the gap between two bound curves.

    ``bound_fn_pair`` is a pair of callables mapping sigma^2 to a scalar
    MSE. Grid points where the gap underflows (< 1e-300) are dropped with
    a warning; fewer than two surviving points is an error.
    """
    fn_a, fn_b = bound_fn_pair
    grid = as_vector("sigma_sq_grid", sigma_sq_grid)
    if grid.shape[0] < 4:
        raise ValueError("sigma_sq_grid needs at least 4 points")
    if np.any(grid <= 0):
        raise ValueError("sigma_sq_grid must be positive")
    if grid.max() / grid.min() < 100:
        raise ValueError("sigma_sq_grid must span at least two decades")
    gaps = np.array([abs(float(fn_a(s)) - float(fn_b(s))) for s in grid])
    keep = gaps >= 1e-300
    if not np.all(keep):
        warnings.warn("gap underflow on part of the grid; shrinking the fit "
                      f"to {int(keep.sum())} points", RuntimeWarning)
    if keep.sum() < 2:
        raise ValueError("gap vanishes on the grid; no slope to fit")
    x = np.log(grid[keep])
    y = np.log(gaps[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = y - y.mean()
    ss_tot = float(total @ total)
    r_sq = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    return SlopeFit(slope=float(slope), intercept=float(intercept),
                    r_squared=r_sq, points_used=int(keep.sum()))


def mse_bound_pair(n_rx: int, rhos, coherence_len: int,
                        cbar_mode: str = "plugin"):
    """Callable pair (conditional-mean MSE, parametric MSE) over sigma^2."""
    n = as_int("n_rx", n_rx, minimum=2)
    rhos = as_vector("rhos", rhos)
    T = as_int("coherence_len", coherence_len, minimum=1)

    def inputs(sig2: float) -> BoundInputs:
        return BoundInputs(n_rx=n, rhos=rhos, noise_var=sig2,
                           coherence_len=T,
                           c_bars=cbar_values(n, rhos, sig2, T,
                                              mode=cbar_mode))

    return (lambda s: cme_asymptotic_mse(inputs(s))[0],
            lambda s: pbce_asymptotic_mse(inputs(s))[0])


@dataclass
class MismatchGap:
    """Exact bound shift under a mismatched noise belief, with its
    leading-order prediction sum_l rho_l^2 (eps sigma^2)^2 / (rho_l+sigma^2)^3."""

    gap: float
    leading_term: float


def mismatch_gap(inputs: BoundInputs, epsilon: float) -> MismatchGap:
    eps = as_float("epsilon", epsilon)
    if eps <= -1:
        raise ValueError("epsilon must be > -1")
    exact = pbce_asymptotic_mse(inputs, mismatch_eps=eps)[0] \
        - pbce_asymptotic_mse(inputs)[0]
    sig2 = inputs.noise_var
    leading = float(np.sum(inputs.rhos ** 2 * (eps * sig2) ** 2
                           / (inputs.rhos + sig2) ** 3))
    return MismatchGap(gap=exact, leading_term=leading)

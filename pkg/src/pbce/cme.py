"""Conditional-mean machinery.

Three layers: the sampled conditional-mean filter (the grid estimator that
evaluates the posterior-weighted mixture of conditional LMMSE filters), the
asymptotic Gaussian-smeared filters it converges to in the high-SNR / long
coherence regime, and the supporting analysis tools (prior-flatness checker,
Chernoff tail bound, prior densities and sampling grids over the spatial
frequency).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import erf, erfc

from ._validation import as_float, as_int, as_square_matrix, as_vector
from .array_model import PriorSpec, steering_matrix
from .estimators import Filter

QUADRATURE_NODES = 801
QUADRATURE_HALFWIDTH_SIGMAS = 8.0


# ---------------------------------------------------------------------------
# Asymptotic (Gaussian-smeared) filters


@dataclass
class AsymptoticCmeSpec:
    """Per-path inputs of the asymptotic conditional-mean filter.

    variances holds the posterior-width constant of each path,
    C_l = 6 sigma^2 (rho_l + sigma^2) / (T n^2 rho_l abar_l), with abar_l
    the realized mean squared gain; the single-path case with rho = n
    reduces to 6 sigma^2 (n + sigma^2) / (T n^3 abar). shrinkages are the
    LMMSE gains rho_l / (rho_l + sigma^2).
    """

    omega_hats: np.ndarray
    variances: np.ndarray
    shrinkages: np.ndarray

    def __post_init__(self):
        self.omega_hats = as_vector("omega_hats", self.omega_hats)
        L = self.omega_hats.shape[0]
        self.variances = as_vector("variances", self.variances, length=L)
        self.shrinkages = as_vector("shrinkages", self.shrinkages, length=L)
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")
        if np.any((self.shrinkages <= 0) | (self.shrinkages >= 1)):
            raise ValueError("shrinkages must lie in (0, 1)")

    @classmethod
    def from_model(cls, omega_hats, rhos, noise_var: float,
                   coherence_len: int, emp_gain_power,
                   n_rx: int) -> "AsymptoticCmeSpec":
        """Build the spec from model quantities (true gain statistics)."""
        omega_hats = as_vector("omega_hats", omega_hats)
        L = omega_hats.shape[0]
        rhos = as_vector("rhos", rhos, length=L)
        abar = as_vector("emp_gain_power", emp_gain_power, length=L)
        sig2 = as_float("noise_var", noise_var, positive=True)
        T = as_int("coherence_len", coherence_len, minimum=1)
        n = as_int("n_rx", n_rx, minimum=1)
        variances = 6 * sig2 * (rhos + sig2) / (T * n ** 2 * rhos * abar)
        return cls(omega_hats=omega_hats, variances=variances,
                   shrinkages=rhos / (rhos + sig2))


def smeared_outer(omega_hat: float, variance: float, n_rx: int,
                  method: str = "closed_form") -> np.ndarray:
    """Steering outer product averaged over a Gaussian angle posterior.

    G(w, C) = integral of N(d; w, C) a(d) a(d)^H dd. The closed form uses
    the Gaussian characteristic function: entry (m, p) equals
    (1/n) exp(-j (m-p) w) exp(-(m-p)^2 C / 2). The quadrature path
    integrates with Gauss-Legendre nodes over w +/- 8 sqrt(C), where the
    neglected tail mass is below 1e-14.
    """
    n = as_int("n_rx", n_rx, minimum=1)
    omega_hat = as_float("omega_hat", omega_hat)
    C = as_float("variance", variance)
    if C <= 0:
        raise ValueError("variance must be positive")
    if method == "closed_form":
        k = np.arange(n)
        d = k[:, None] - k[None, :]
        return np.exp(-1j * d * omega_hat - d.astype(float) ** 2 * C / 2) / n
    if method == "quadrature":
        half = QUADRATURE_HALFWIDTH_SIGMAS * np.sqrt(C)
        nodes, weights = leggauss(QUADRATURE_NODES)
        x = omega_hat + half * nodes
        w = half * weights * np.exp(-(x - omega_hat) ** 2 / (2 * C)) \
            / np.sqrt(2 * np.pi * C)
        A = steering_matrix(x, n)
        return (A * w) @ A.conj().T
    raise ValueError(f"method must be 'closed_form' or 'quadrature', "
                     f"got {method!r}")


def asymptotic_cme_filter(spec: AsymptoticCmeSpec, n_rx: int,
                          method: str = "closed_form") -> Filter:
    """Sum of shrinkage-scaled smeared outer products, one per path."""
    n = as_int("n_rx", n_rx, minimum=1)
    W = np.zeros((n, n), dtype=complex)
    for w_hat, C, s in zip(spec.omega_hats, spec.variances, spec.shrinkages):
        W += s * smeared_outer(w_hat, C, n, method=method)
    return Filter(matrix=W)


# ---------------------------------------------------------------------------
# Sampled conditional-mean filter (the grid estimator)


def sampled_cme_filter(sample_cov, coherence_len: int, noise_var: float,
                       prior_samples, log_prior_weights=None) -> Filter:
    """Posterior-weighted mixture of conditional LMMSE filters.

    Each sample is a parameter candidate (omegas, rhos). The log-weight of
    candidate i is (T / sigma^2) tr(W_i C_hat) + T log det(I - W_i), plus
    an optional log prior weight for non-uniformly spaced sample sets.
    Weights are normalized in log space with max subtraction, so at least
    one weight is exp(0) and underflow of the full set cannot occur.

    Returns the combined filter with its weight entropy (in nats) attached
    as a convergence diagnostic: entropy near zero means the posterior has
    collapsed onto a single candidate.
    """
    C_hat = np.asarray(as_square_matrix("sample_cov", sample_cov),
                       dtype=complex)
    n = C_hat.shape[0]
    T = as_int("coherence_len", coherence_len, minimum=1)
    sig2 = as_float("noise_var", noise_var, positive=True)
    samples = [(as_vector("omegas", om), as_vector("rhos", rh))
               for om, rh in prior_samples]
    if not samples:
        raise ValueError("prior_samples must be nonempty")
    if log_prior_weights is None:
        log_prior = np.zeros(len(samples))
    else:
        log_prior = np.asarray(log_prior_weights, dtype=float)
        if log_prior.shape != (len(samples),):
            raise ValueError("log_prior_weights must match prior_samples")

    if all(om.shape[0] == 1 for om, _ in samples):
        # Rank-1 fast path: W_i = s_i a_i a_i^H with s_i = rho/(rho+sig2).
        omegas = np.array([om[0] for om, _ in samples])
        rhos = np.array([rh[0] for _, rh in samples])
        shrink = rhos / (rhos + sig2)
        A = steering_matrix(omegas, n)
        quad = np.real(np.einsum("ik,ij,jk->k", A.conj(), C_hat, A))
        logw = (T / sig2) * shrink * quad \
            + T * np.log1p(-shrink) + log_prior
        weights = _normalize_log_weights(logw)
        W = (A * (weights * shrink)) @ A.conj().T
        return Filter(matrix=W, weight_entropy=_entropy(weights))

    eye = np.eye(n)
    logw = np.empty(len(samples))
    filters = []
    for i, (om, rh) in enumerate(samples):
        A = steering_matrix(om, n)
        M = (A * rh) @ A.conj().T
        S = M + sig2 * eye
        W = np.linalg.solve(S.T, M.T).T
        W = (W + W.conj().T) / 2.0
        sign, logdet_S = np.linalg.slogdet(S)
        # det(I - W) = sigma^{2n} / det(S) for W = M S^{-1}
        logdet_onemw = n * np.log(sig2) - logdet_S
        logw[i] = (T / sig2) * np.real(np.einsum("ij,ji->", W, C_hat)) \
            + T * logdet_onemw + log_prior[i]
        filters.append(W)
    weights = _normalize_log_weights(logw)
    W = np.zeros((n, n), dtype=complex)
    for wi, Wi in zip(weights, filters):
        W += wi * Wi
    return Filter(matrix=W, weight_entropy=_entropy(weights))


def _normalize_log_weights(logw: np.ndarray) -> np.ndarray:
    shifted = logw - logw.max()
    w = np.exp(shifted)
    return w / w.sum()


def _entropy(weights: np.ndarray) -> float:
    nz = weights[weights > 0]
    return float(-np.sum(nz * np.log(nz)))


# ---------------------------------------------------------------------------
# Prior densities over the spatial frequency


@dataclass
class PriorDensity:
    """Evaluable density over a scalar parameter with analytic gradient."""

    pdf: Callable[[np.ndarray], np.ndarray]
    log_pdf_gradient: Callable[[np.ndarray], np.ndarray]
    support: tuple[float, float]
    _mass_grid: tuple[float, float] | None = None
    _mass_fn: Callable[[int], float] | None = None

    def quadrature_mass(self, num_points: int = 200001) -> float:
        """Quadrature mass over the support; should be 1 to ~1e-6.

        Densities born from a change of variables integrate in their
        original coordinates (the omega-domain mixture has an integrable
        endpoint singularity that defeats naive trapezoids).
        """
        if self._mass_fn is not None:
            return self._mass_fn(num_points)
        lo, hi = self._mass_grid if self._mass_grid else self.support
        x = np.linspace(lo, hi, num_points)
        return float(np.trapezoid(self.pdf(x), x))

    @staticmethod
    def uniform(lo: float, hi: float) -> "PriorDensity":
        lo, hi = float(lo), float(hi)
        if hi <= lo:
            raise ValueError("uniform support must have hi > lo")
        height = 1.0 / (hi - lo)

        def pdf(x):
            x = np.asarray(x, dtype=float)
            return np.where((x >= lo) & (x <= hi), height, 0.0)

        def grad(x):
            return np.zeros_like(np.asarray(x, dtype=float))

        return PriorDensity(pdf=pdf, log_pdf_gradient=grad, support=(lo, hi))

    @staticmethod
    def gaussian(mean: float, std: float) -> "PriorDensity":
        mean = float(mean)
        std = as_float("std", std, positive=True)

        def pdf(x):
            x = np.asarray(x, dtype=float)
            return np.exp(-(x - mean) ** 2 / (2 * std ** 2)) \
                / (std * np.sqrt(2 * np.pi))

        def grad(x):
            return -(np.asarray(x, dtype=float) - mean) / std ** 2

        return PriorDensity(pdf=pdf, log_pdf_gradient=grad,
                            support=(-np.inf, np.inf),
                            _mass_grid=(mean - 12 * std, mean + 12 * std))

    @staticmethod
    def from_angle_mixture(prior: PriorSpec) -> "PriorDensity":
        """Angle-mixture prior mapped to the spatial frequency axis."""
        def mass(num_points: int) -> float:
            th = np.linspace(-90.0, 90.0, num_points)
            return float(np.trapezoid(theta_pdf(prior, th), th))

        return PriorDensity(
            pdf=lambda x: omega_pdf(prior, x),
            log_pdf_gradient=lambda x: omega_log_pdf_gradient(prior, x),
            support=(-np.pi, np.pi),
            _mass_fn=mass,
        )


# Mixture machinery in the degree domain. The sampler redraws the region on
# every rejection, so the implied density is the untruncated mixture
# restricted to (-90, 90) with one global normalization constant.


def _mixture_arrays(prior: PriorSpec):
    w = prior.weights
    mu = prior.means_deg
    sd = prior.stds_deg
    zed = 0.5 * (erf((90.0 - mu) / (sd * np.sqrt(2)))
                 - erf((-90.0 - mu) / (sd * np.sqrt(2))))
    return w, mu, sd, float(np.sum(w * zed))


def theta_pdf(prior: PriorSpec, theta_deg) -> np.ndarray:
    """Truncated mixture density over the arrival angle in degrees."""
    w, mu, sd, z_tot = _mixture_arrays(prior)
    th = np.atleast_1d(np.asarray(theta_deg, dtype=float))
    comp = np.exp(-(th[:, None] - mu) ** 2 / (2 * sd ** 2)) \
        / (sd * np.sqrt(2 * np.pi))
    dens = (comp @ w) / z_tot
    dens = np.where(np.abs(th) < 90.0, dens, 0.0)
    return dens if np.ndim(theta_deg) else float(dens[0])


def theta_cdf(prior: PriorSpec, theta_deg) -> np.ndarray:
    w, mu, sd, z_tot = _mixture_arrays(prior)
    th = np.clip(np.atleast_1d(np.asarray(theta_deg, dtype=float)),
                 -90.0, 90.0)
    upper = 0.5 * (erf((th[:, None] - mu) / (sd * np.sqrt(2)))
                   - erf((-90.0 - mu) / (sd * np.sqrt(2))))
    out = (upper @ w) / z_tot
    return out if np.ndim(theta_deg) else float(out[0])


def _theta_of_omega(omega: np.ndarray) -> np.ndarray:
    return np.degrees(np.arcsin(np.clip(omega / np.pi, -1.0, 1.0)))


def omega_pdf(prior: PriorSpec, omega) -> np.ndarray:
    """Mixture density pushed to omega = pi sin(theta)."""
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    u = om / np.pi
    inside = np.abs(u) < 1.0
    dens = np.zeros_like(om)
    if np.any(inside):
        th = _theta_of_omega(om[inside])
        jac = (180.0 / np.pi ** 2) / np.sqrt(1.0 - (om[inside] / np.pi) ** 2)
        dens[inside] = theta_pdf(prior, th) * jac
    return dens if np.ndim(omega) else float(dens[0])


def omega_log_pdf(prior: PriorSpec, omega) -> np.ndarray:
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    dens = omega_pdf(prior, om)
    with np.errstate(divide="ignore"):
        out = np.log(dens)
    return out if np.ndim(omega) else float(out[0])


def omega_log_pdf_gradient(prior: PriorSpec, omega) -> np.ndarray:
    """Analytic d/d omega of the log mixture density in the omega domain."""
    w, mu, sd, _ = _mixture_arrays(prior)
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    u = om / np.pi
    if np.any(np.abs(u) >= 1.0):
        raise ValueError("omega outside the open support (-pi, pi)")
    th = _theta_of_omega(om)
    comp = np.exp(-(th[:, None] - mu) ** 2 / (2 * sd ** 2)) \
        / (sd * np.sqrt(2 * np.pi))
    num = comp @ (w * 1.0)  # mixture value (unnormalized)
    dnum = (comp * (-(th[:, None] - mu) / sd ** 2)) @ w
    dtheta_domega = (180.0 / np.pi ** 2) / np.sqrt(1.0 - u ** 2)
    grad = (dnum / num) * dtheta_domega + u / (np.pi * (1.0 - u ** 2))
    return grad if np.ndim(omega) else float(grad[0])


# ---------------------------------------------------------------------------
# Sampling grids for the grid estimator


def chernoff_halfwidth(variance: float, mass_defect: float = 1e-9) -> float:
    """Window half-width k with two-sided Gaussian tail mass <= mass_defect."""
    C = as_float("variance", variance, positive=True)
    defect = as_float("mass_defect", mass_defect, positive=True)
    if defect >= 2:
        raise ValueError("mass_defect must be below 2")
    return float(np.sqrt(2 * C * np.log(2.0 / defect)))


def posterior_window_grid(prior: PriorSpec, center: float, variance: float,
                          num_samples: int, mass_defect: float = 1e-9):
    """Uniform omega grid over the Chernoff window around an anchor.

    Returns (omegas, log_prior_weights). The window half-width comes from
    the posterior-width constant (chernoff_halfwidth); log prior weights
    make the uniformly spaced grid represent the prior measure.
    """
    num = as_int("num_samples", num_samples, minimum=2)
    center = as_float("center", center)
    half = chernoff_halfwidth(variance, mass_defect)
    eps = 1e-9
    lo = max(center - half, -np.pi + eps)
    hi = min(center + half, np.pi - eps)
    if hi <= lo:
        raise ValueError("window collapsed; anchor lies outside the support")
    omegas = np.linspace(lo, hi, num)
    return omegas, omega_log_pdf(prior, omegas)


def prior_quantile_grid(prior: PriorSpec, num_samples: int) -> np.ndarray:
    """Equal-mass omega grid: quantiles (i + 1/2)/num of the angle prior.

    Equal prior mass per sample means uniform weights in the sampled
    conditional-mean filter.
    """
    num = as_int("num_samples", num_samples, minimum=1)
    probs = (np.arange(num) + 0.5) / num
    lo = np.full(num, -90.0)
    hi = np.full(num, 90.0)
    for _ in range(80):  # bisection to ~1e-22 degrees
        mid = (lo + hi) / 2
        below = theta_cdf(prior, mid) < probs
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    thetas = (lo + hi) / 2
    return np.pi * np.sin(np.radians(thetas))


def sample_omegas_iid(prior: PriorSpec, num_samples: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Independent draws of a single-path omega from the angle prior."""
    num = as_int("num_samples", num_samples, minimum=1)
    w = prior.weights
    cumw = np.cumsum(w)
    mu = prior.means_deg
    sd = prior.stds_deg
    thetas = np.empty(num)
    pending = np.arange(num)
    while pending.size:
        regions = np.minimum(
            np.searchsorted(cumw, rng.random(pending.size), side="right"),
            len(w) - 1)
        draw = mu[regions] + sd[regions] * rng.standard_normal(pending.size)
        ok = np.abs(draw) < 90.0
        thetas[pending[ok]] = draw[ok]
        pending = pending[~ok]
    return np.pi * np.sin(np.radians(thetas))


# ---------------------------------------------------------------------------
# Analysis utilities


@dataclass
class FlatnessReport:
    """Result of the prior-flatness check over a parameter region."""

    sup_log_gradient: float
    diameter: float
    product: float
    threshold: float
    satisfied: bool


def check_prior_flatness(density: PriorDensity, region: tuple[float, float],
                         grid_points: int = 2001,
                         threshold: float = 0.1) -> FlatnessReport:
    """Check approximate prior constancy over a region.

    Evaluates r = sup |p'(x) / p(x)| on a dense grid; the flatness
    condition holds when r times the region diameter stays below the
    threshold. A zero density anywhere on the grid means the region is not
    inside the prior support.
    """
    lo, hi = (as_float("region lo", region[0]),
              as_float("region hi", region[1]))
    if hi <= lo:
        raise ValueError("region must satisfy hi > lo")
    grid_points = as_int("grid_points", grid_points, minimum=2)
    threshold = as_float("threshold", threshold, positive=True)
    x = np.linspace(lo, hi, grid_points)
    p = np.asarray(density.pdf(x), dtype=float)
    if np.any(p <= 0):
        raise ValueError("region extends outside the prior support "
                         "(zero density encountered)")
    r = float(np.max(np.abs(density.log_pdf_gradient(x))))
    diam = hi - lo
    product = r * diam
    return FlatnessReport(sup_log_gradient=r, diameter=diam, product=product,
                          threshold=threshold,
                          satisfied=bool(product < threshold))


@dataclass
class ChernoffTail:
    """Chernoff bound on the Gaussian tail mass outside a window.

    bound_mass and exact_mass are in unnormalized-integral units (the
    Gaussian normalization sqrt(2 pi C) factored out of neither);
    premise_defect = 2 exp(-k^2 / 2C) is the normalized two-sided tail
    bound used to check that the window keeps essentially all mass.
    """

    bound_mass: float
    exact_mass: float
    premise_defect: float


def chernoff_tail_mass(variance: float, halfwidth: float) -> ChernoffTail:
    C = as_float("variance", variance, positive=True)
    k = as_float("halfwidth", halfwidth, positive=True)
    norm = np.sqrt(2 * np.pi * C)
    bound = norm * np.exp(-k ** 2 / (2 * C))
    exact = norm * erfc(k / np.sqrt(2 * C))
    return ChernoffTail(bound_mass=float(bound), exact_mass=float(exact),
                        premise_defect=float(2 * np.exp(-k ** 2 / (2 * C))))

"""Ground-truth synthesis for a uniform linear receive array.

Steering vectors, the sparse multipath channel, the structured angle prior,
noise, observation blocks and their sample covariance. Everything here is a
pure function of explicit inputs plus a caller-owned RNG, so Monte-Carlo
workers can run concurrently on private substreams.

Conventions: antennas are indexed k = 0..n-1, the steering vector carries a
1/sqrt(n) normalization so it is unit norm, and the spatial frequency is
omega = pi * sin(theta) for half-wavelength element spacing. A realization
with gain variances summing to n has E||h(t)||^2 = n, so NMSE = MSE / n and
the SNR is 1 / noise_var.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float, as_int, as_vector

GAIN_LAWS = ("uniform-normalized", "fixed")


def steering(omega: float, n: int) -> np.ndarray:
    """Unit-norm array response, entry k = exp(-j*k*omega) / sqrt(n)."""
    n = as_int("n", n, minimum=1)
    omega = as_float("omega", omega)
    k = np.arange(n)
    return np.exp(-1j * k * omega) / np.sqrt(n)


def steering_matrix(omegas, n: int) -> np.ndarray:
    """Stack steering vectors as columns, shape (n, L)."""
    omegas = as_vector("omegas", omegas)
    k = np.arange(as_int("n", n, minimum=1))[:, None]
    return np.exp(-1j * k * omegas[None, :]) / np.sqrt(n)


def steering_derivative(omega: float, n: int) -> np.ndarray:
    """Entrywise d/d omega of steering(); entry k = (-j*k/sqrt(n))e^{-jk omega}."""
    n = as_int("n", n, minimum=1)
    omega = as_float("omega", omega)
    k = np.arange(n)
    return (-1j * k) * np.exp(-1j * k * omega) / np.sqrt(n)


def inner_product_sq(omega: float, delta_omega, n: int):
    """Squared inner product of two steering vectors omega apart by delta.

    Returns ``(exact, approx)``. The exact value is the Dirichlet kernel
    [sin(n*d/2) / (n*sin(d/2))]^2, which depends only on the separation.
    The approximation is the small-separation quadratic 1 - n^2 d^2 / 12
    used throughout the asymptotic filter derivations; its validity window
    is |d| well below 2/n. Both broadcast over ``delta_omega``.
    """
    n = as_int("n", n, minimum=1)
    as_float("omega", omega)  # interface symmetry; the kernel is shift-invariant
    d = np.asarray(delta_omega, dtype=float)
    num = np.sin(n * d / 2.0)
    den = n * np.sin(d / 2.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(den == 0.0, 1.0, num / np.where(den == 0.0, 1.0, den))
    exact = ratio ** 2
    approx = 1.0 - (n ** 2) * d ** 2 / 12.0
    if np.isscalar(delta_omega):
        return float(exact), float(approx)
    return exact, approx


@dataclass(frozen=True)
class PriorSpec:
    """Structured angle prior: Gaussian mixture in degrees plus a gain law.

    angle_mixture entries are (weight, mean_deg, std_deg). One mixture
    region is drawn per realization and all paths share it. Angles falling
    outside (-90, 90) degrees trigger a full redraw, as do path pairs
    closer than the minimum spatial-frequency separation.
    """

    angle_mixture: tuple = (
        (0.1, -70.0, 5.0),
        (0.5, -30.0, 10.0),
        (0.2, 20.0, 5.0),
        (0.2, 60.0, 10.0),
    )
    gain_law: str = "uniform-normalized"

    def __post_init__(self):
        if not self.angle_mixture:
            raise ValueError("angle_mixture must be nonempty")
        mix = tuple((as_float("weight", w, nonnegative=True),
                     as_float("mean_deg", m),
                     as_float("std_deg", s, positive=True))
                    for w, m, s in self.angle_mixture)
        object.__setattr__(self, "angle_mixture", mix)
        total = sum(w for w, _, _ in mix)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {total!r}")
        if self.gain_law not in GAIN_LAWS:
            raise ValueError(
                f"gain_law must be one of {GAIN_LAWS}, got {self.gain_law!r}")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _, _ in self.angle_mixture])

    @property
    def means_deg(self) -> np.ndarray:
        return np.array([m for _, m, _ in self.angle_mixture])

    @property
    def stds_deg(self) -> np.ndarray:
        return np.array([s for _, _, s in self.angle_mixture])


def default_prior() -> PriorSpec:
    """The four-region mixture used by all shipped sweep recipes."""
    return PriorSpec()


@dataclass(frozen=True)
class Scenario:
    """Static experiment description; see module docstring for conventions."""

    n_rx: int = 64
    num_paths: int = 1
    coherence_len: int = 1
    noise_var: float = 1.0
    prior: PriorSpec = field(default_factory=PriorSpec)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_rx", as_int("n_rx", self.n_rx, minimum=2))
        object.__setattr__(self, "num_paths",
                           as_int("num_paths", self.num_paths, minimum=1))
        object.__setattr__(self, "coherence_len",
                           as_int("coherence_len", self.coherence_len,
                                  minimum=1))
        object.__setattr__(self, "noise_var",
                           as_float("noise_var", self.noise_var,
                                    positive=True))
        if not isinstance(self.prior, PriorSpec):
            raise TypeError("prior must be a PriorSpec")
        seed = as_int("seed", self.seed, minimum=0)
        if seed >= 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        object.__setattr__(self, "seed", seed)

    @property
    def snr_db(self) -> float:
        return -10.0 * np.log10(self.noise_var)


def noise_var_from_snr_db(snr_db: float) -> float:
    return 10.0 ** (-as_float("snr_db", snr_db) / 10.0)


@dataclass
class ChannelRealization:
    """Sampled ground truth for one coherence block."""

    omegas: np.ndarray        # (L,) spatial frequencies in (-pi, pi]
    rhos: np.ndarray          # (L,) gain variances, sum = n_rx under the prior
    alphas: np.ndarray        # (L, T) complex path gains, CN(0, rho_l) iid in t
    channels: np.ndarray      # (n_rx, T) columns h(t)
    region_index: int = -1    # mixture region the draw came from (diagnostic)


@dataclass
class ObservationBlock:
    """Noisy snapshots plus the statistics downstream consumers need."""

    snapshots: np.ndarray       # (n_rx, T) columns y(t) = h(t) + noise
    noise_var: float
    sample_cov: np.ndarray      # (n_rx, n_rx), snapshots @ snapshots^H / T
    emp_gain_power: np.ndarray  # (L,) realized mean |alpha_l(t)|^2 over t


def _min_circular_separation(omegas: np.ndarray) -> float:
    if omegas.size < 2:
        return np.inf
    diff = np.abs(omegas[:, None] - omegas[None, :]) % (2 * np.pi)
    diff = np.minimum(diff, 2 * np.pi - diff)
    iu = np.triu_indices(omegas.size, k=1)
    return float(diff[iu].min())


def sample_prior(prior: PriorSpec, scenario: Scenario,
                 rng: np.random.Generator,
                 min_separation: float | None = None) -> ChannelRealization:
    """Draw one channel realization from the structured prior.

    One mixture region per realization; all L angles come from that region's
    Gaussian (in degrees) and map through omega = pi*sin(theta). Draws with
    any |theta| >= 90 deg, or with two spatial frequencies closer than
    ``min_separation`` (default one beamwidth 2*pi/n_rx, pass 0 to disable),
    are rejected and fully redrawn, region included.
    """
    n = scenario.n_rx
    L = scenario.num_paths
    T = scenario.coherence_len
    if min_separation is None:
        min_separation = 2 * np.pi / n if L > 1 else 0.0
    weights = prior.weights
    cumw = np.cumsum(weights)
    while True:
        region = int(np.searchsorted(cumw, rng.random(), side="right"))
        region = min(region, len(weights) - 1)  # guard cumw[-1] rounding
        mu = prior.angle_mixture[region][1]
        sd = prior.angle_mixture[region][2]
        thetas = mu + sd * rng.standard_normal(L)
        if np.any(np.abs(thetas) >= 90.0):
            continue
        omegas = np.pi * np.sin(np.radians(thetas))
        if _min_circular_separation(omegas) < min_separation:
            continue
        break
    if prior.gain_law == "fixed":
        rhos = np.full(L, n / L)
    else:
        raw = rng.uniform(0.0, n, size=L)
        rhos = raw / raw.sum() * n
    alphas = (rng.standard_normal((L, T)) + 1j * rng.standard_normal((L, T)))
    alphas *= np.sqrt(rhos / 2.0)[:, None]
    channels = steering_matrix(omegas, n) @ alphas
    return ChannelRealization(omegas=omegas, rhos=rhos, alphas=alphas,
                              channels=channels, region_index=region)


def observe(realization: ChannelRealization, scenario: Scenario,
            rng: np.random.Generator) -> ObservationBlock:
    """Add fresh CN(0, noise_var I) noise and form the sample covariance."""
    n, T = realization.channels.shape
    if n != scenario.n_rx or T != scenario.coherence_len:
        raise ValueError("realization dimensions do not match the scenario")
    noise = (rng.standard_normal((n, T)) + 1j * rng.standard_normal((n, T)))
    noise *= np.sqrt(scenario.noise_var / 2.0)
    snapshots = realization.channels + noise
    sample_cov = snapshots @ snapshots.conj().T / T
    emp_gain_power = np.mean(np.abs(realization.alphas) ** 2, axis=1)
    return ObservationBlock(snapshots=snapshots,
                            noise_var=scenario.noise_var,
                            sample_cov=sample_cov,
                            emp_gain_power=emp_gain_power)

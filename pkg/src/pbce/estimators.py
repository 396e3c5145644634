"""Parameter estimators and the parametric channel estimators built on them.

The pipeline: a DoA estimator (Bartlett beamformer or root-MUSIC) anchors
the spatial frequencies, a least-squares readout recovers the per-path gain
variances from the sample covariance, and the conditional LMMSE filter at
those parameters produces the channel estimate. A genie variant evaluates
the same filter at the true parameters as a utopian reference.

All functions are stateless; the class wrappers at the bottom add a
fit/transform/predict surface with get_params/set_params for pipeline use.
"""

from __future__ import annotations

import inspect
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import (as_float, as_int, as_square_matrix, as_vector,
                          check_hermitian)
from .array_model import (ChannelRealization, ObservationBlock, steering,
                          steering_matrix)


class EstimationFailure(RuntimeError):
    """A parameter estimator could not produce the requested estimate."""


@dataclass
class ParamEstimate:
    """Estimated channel parameters feeding the conditional LMMSE filter."""

    omegas_hat: np.ndarray   # (L,) spatial frequencies in (-pi, pi]
    rhos_hat: np.ndarray     # (L,) gain variances, clamped >= 0
    noise_var_used: float    # sigma^2 actually supplied to the filter


@dataclass
class Filter:
    """Linear channel estimator W applied as h_hat = W @ y."""

    matrix: np.ndarray
    weight_entropy: float | None = None  # set by the sampled CME combiner

    def apply(self, y: np.ndarray) -> np.ndarray:
        return self.matrix @ y


@dataclass
class BartlettEstimate:
    """Peak of the Bartlett spectrum; degenerate flags a flat spectrum."""

    omega_hat: float
    degenerate: bool = False

    def __float__(self) -> float:
        return self.omega_hat


def _wrap_angle(omega: float) -> float:
    """Map into (-pi, pi]."""
    out = (omega + np.pi) % (2 * np.pi) - np.pi
    if out == -np.pi:
        out = np.pi
    return float(out)


def _bartlett_spectrum_grid(sample_cov: np.ndarray, n: int,
                            grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a^H(w) C a(w) on a uniform grid over [-pi, pi) via one FFT.

    The spectrum is (1/n) sum_k q_k e^{jk w} with q_k the k-th diagonal sum
    of C; Hermitian symmetry collapses it to the k >= 0 half.
    """
    q = np.empty(n, dtype=complex)
    for k in range(n):
        q[k] = np.trace(sample_cov, offset=-k)  # sum of C[m, m-k], m-p = k
    grid = -np.pi + 2 * np.pi * np.arange(grid_size) / grid_size
    buf = np.zeros(grid_size, dtype=complex)
    buf[:n] = q * ((-1.0) ** np.arange(n))  # fold the e^{-jk pi} grid offset
    partial = grid_size * np.fft.ifft(buf)
    spectrum = (2.0 * partial.real - q[0].real) / n
    return grid, spectrum


def bartlett_estimate(sample_cov, n_rx: int, grid_size: int = 4096,
                      refine: bool = True) -> BartlettEstimate:
    """Single-source Bartlett beamformer: argmax of a^H(w) C_hat a(w).

    Grid search over ``grid_size`` points on (-pi, pi] followed by one
    parabolic interpolation step around the peak when ``refine`` is set.
    A flat spectrum (all-zero or isotropic covariance) cannot localize a
    source; the result is flagged degenerate with omega_hat = 0.
    """
    n = as_int("n_rx", n_rx, minimum=1)
    grid_size = as_int("grid_size", grid_size, minimum=4 * n)
    C = as_square_matrix("sample_cov", sample_cov, size=n)
    grid, spectrum = _bartlett_spectrum_grid(C, n, grid_size)
    spread = float(spectrum.max() - spectrum.min())
    scale = max(float(np.abs(spectrum).max()), 1e-300)
    if spread <= 1e-12 * scale:
        warnings.warn("Bartlett spectrum is flat; covariance carries no "
                      "directional information", RuntimeWarning)
        return BartlettEstimate(omega_hat=0.0, degenerate=True)
    g = int(np.argmax(spectrum))
    omega_hat = grid[g]
    if refine:
        s0 = spectrum[g]
        sm = spectrum[(g - 1) % grid_size]
        sp = spectrum[(g + 1) % grid_size]
        denom = sm - 2 * s0 + sp
        if denom < 0:  # proper local max; flat neighborhoods skip refinement
            offset = 0.5 * (sm - sp) / denom
            omega_hat = omega_hat + offset * (2 * np.pi / grid_size)
    return BartlettEstimate(omega_hat=_wrap_angle(omega_hat))


def _noise_subspace_kernel(sample_cov: np.ndarray, n: int,
                           num_paths: int) -> np.ndarray:
    """Projector onto the noise subspace, Q = I - E_s E_s^H."""
    _, vecs = np.linalg.eigh(sample_cov)
    signal = vecs[:, n - num_paths:]
    return np.eye(n) - signal @ signal.conj().T


def _polish_on_kernel(Q: np.ndarray, omega: float, iters: int = 3) -> float:
    """Newton steps on f(w) = a^H(w) Q a(w) around a located root.

    Removes the ~1e-9 angle noise floor of companion-matrix rooting; the
    curvature guard and step cap keep it from leaving the local minimum.
    """
    n = Q.shape[0]
    k = np.arange(n)
    for _ in range(iters):
        a = np.exp(-1j * k * omega) / np.sqrt(n)
        da = -1j * k * a
        dda = -(k ** 2) * a
        Qa = Q @ a
        f1 = 2.0 * np.real(da.conj() @ Qa)
        f2 = 2.0 * np.real(dda.conj() @ Qa + da.conj() @ (Q @ da))
        if f2 <= 0:
            break
        step = f1 / f2
        if abs(step) > np.pi / n:
            break
        omega -= step
    return omega


def root_music(sample_cov, n_rx: int, num_paths: int,
               polish: bool = True, fb_average: bool = False) -> np.ndarray:
    """Root-MUSIC spatial frequencies from the sample covariance.

    Eigendecomposition splits off the noise subspace; the roots of its
    Gram-kernel polynomial that lie strictly inside the unit disk, taken
    closest to the unit circle (ties broken by the smaller on-circle
    polynomial magnitude), give the L frequencies. ``polish`` refines each
    angle by a few Newton steps on the subspace spectrum; ``fb_average``
    applies forward-backward averaging to the covariance first.

    Raises EstimationFailure when fewer than ``num_paths`` candidate roots
    exist; callers should count that trial as an estimator failure.
    """
    n = as_int("n_rx", n_rx, minimum=2)
    L = as_int("num_paths", num_paths, minimum=1)
    if L >= n:
        raise ValueError("num_paths must be smaller than n_rx")
    C = np.asarray(as_square_matrix("sample_cov", sample_cov, size=n),
                   dtype=complex)
    check_hermitian("sample_cov", C, tol=1e-8)
    if fb_average:
        J = np.eye(n)[::-1]
        C = (C + J @ C.conj() @ J) / 2.0
    Q = _noise_subspace_kernel(C, n, L)
    # Descending-power coefficients of z^{n-1} * sum_k q_k z^k.
    coeffs = np.array([np.trace(Q, offset=o) for o in range(-(n - 1), n)])
    roots = np.roots(coeffs)
    inside = roots[np.abs(roots) < 1.0]
    if inside.size < L:
        raise EstimationFailure(
            f"root-MUSIC found {inside.size} of {L} required roots inside "
            "the unit disk")
    angles = np.angle(inside)
    k = np.arange(-(n - 1), n)
    on_circle = np.abs(np.exp(1j * np.outer(angles, k[::-1])) @ coeffs)
    order = np.lexsort((on_circle, -np.abs(inside)))
    omegas = angles[order[:L]]
    if polish:
        omegas = np.array([_polish_on_kernel(Q, w) for w in omegas])
    omegas = np.array([_wrap_angle(w) for w in omegas])
    return np.sort(omegas)


def estimate_gains(sample_cov, omegas_hat, noise_var: float,
                   n_rx: int | None = None) -> np.ndarray:
    """Least-squares gain-variance readout at the estimated angles.

    rho_hat = diag((A^H A)^{-1} A^H (C_hat - sigma^2 I) A (A^H A)^{-1}),
    clamped at zero since the entries estimate variances.
    """
    C = as_square_matrix("sample_cov", sample_cov)
    n = C.shape[0] if n_rx is None else as_int("n_rx", n_rx, minimum=2)
    if C.shape[0] != n:
        raise ValueError("sample_cov size does not match n_rx")
    noise_var = as_float("noise_var", noise_var, nonnegative=True)
    omegas_hat = as_vector("omegas_hat", omegas_hat)
    A = steering_matrix(omegas_hat, n)
    G = A.conj().T @ A
    if np.linalg.cond(G) > 1e12:
        raise EstimationFailure(
            "steering matrix is rank deficient; estimated angles are too "
            "close to resolve the paths")
    Gi = np.linalg.inv(G)
    M = A.conj().T @ (C - noise_var * np.eye(n)) @ A
    rhos = np.real(np.diag(Gi @ M @ Gi))
    return np.maximum(rhos, 0.0)


def conditional_lmmse_filter(omegas, rhos, noise_var: float, n_rx: int,
                             mode: str = "exact") -> Filter:
    """Conditional LMMSE filter given channel parameters.

    exact: W = A C_rho A^H (A C_rho A^H + sigma^2 I)^{-1}.
    favorable: W = sum_l rho_l/(rho_l+sigma^2) a_l a_l^H, the large-array
    form that drops steering cross terms.
    """
    if mode not in ("exact", "favorable"):
        raise ValueError(f"mode must be 'exact' or 'favorable', got {mode!r}")
    noise_var = as_float("noise_var", noise_var, positive=True)
    n = as_int("n_rx", n_rx, minimum=1)
    omegas = as_vector("omegas", omegas)
    rhos = as_vector("rhos", rhos, length=omegas.shape[0])
    if np.any(rhos < 0):
        raise ValueError("rhos must be nonnegative")
    A = steering_matrix(omegas, n)
    if mode == "favorable":
        shrink = rhos / (rhos + noise_var)
        W = (A * shrink) @ A.conj().T
        return Filter(matrix=W)
    M = (A * rhos) @ A.conj().T
    S = M + noise_var * np.eye(n)
    W = np.linalg.solve(S.T, M.T).T  # right division: W S = M
    W = (W + W.conj().T) / 2.0  # M and S commute, so W is Hermitian
    return Filter(matrix=W)


def pbce_estimate(observation: ObservationBlock, param_estimate: ParamEstimate,
                  mode: str = "exact") -> np.ndarray:
    """Channel estimate for the final snapshot from estimated parameters."""
    W = conditional_lmmse_filter(param_estimate.omegas_hat,
                                 param_estimate.rhos_hat,
                                 param_estimate.noise_var_used,
                                 observation.snapshots.shape[0], mode=mode)
    return W.apply(observation.snapshots[:, -1])


def genie_lmmse(observation: ObservationBlock,
                realization: ChannelRealization) -> np.ndarray:
    """Conditional LMMSE at the true parameters, applied to y(T)."""
    W = conditional_lmmse_filter(realization.omegas, realization.rhos,
                                 observation.noise_var,
                                 observation.snapshots.shape[0], mode="exact")
    return W.apply(observation.snapshots[:, -1])


def estimate_parameters(observation: ObservationBlock, num_paths: int,
                        method: str = "rmusic",
                        true_rhos: np.ndarray | None = None,
                        noise_var: float | None = None,
                        polish: bool = True) -> ParamEstimate:
    """Run the configured DoA estimator plus the gain readout.

    ``true_rhos`` short-circuits the gain estimation (perfect gain
    knowledge); ``noise_var`` overrides the observation's value to model a
    mismatched noise belief.
    """
    n = observation.snapshots.shape[0]
    sig2 = observation.noise_var if noise_var is None else \
        as_float("noise_var", noise_var, positive=True)
    if method == "rmusic":
        omegas = root_music(observation.sample_cov, n, num_paths,
                            polish=polish)
    elif method == "bartlett":
        if num_paths != 1:
            raise ValueError("the Bartlett estimator resolves a single path; "
                             "use method='rmusic' for num_paths > 1")
        omegas = np.array([bartlett_estimate(observation.sample_cov,
                                             n).omega_hat])
    else:
        raise ValueError(f"unknown DoA method {method!r}")
    if true_rhos is not None:
        rhos = as_vector("true_rhos", true_rhos, length=num_paths).copy()
    else:
        rhos = estimate_gains(observation.sample_cov, omegas, sig2, n)
    return ParamEstimate(omegas_hat=omegas, rhos_hat=rhos,
                         noise_var_used=sig2)


class _EstimatorApiMixin:
    """Minimal get_params/set_params contract via __init__ introspection."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(
                    f"invalid parameter {key!r} for "
                    f"{type(self).__name__}; valid parameters: "
                    f"{sorted(valid)}")
            setattr(self, key, value)
        return self


class ParametricChannelEstimator(_EstimatorApiMixin):
    """Fit channel parameters from snapshots, then filter like LMMSE.

    fit() consumes an n_rx x T complex snapshot matrix, estimates spatial
    frequencies (root-MUSIC or Bartlett) and gain variances, and caches the
    conditional LMMSE filter. transform() filters every snapshot column;
    predict() returns the estimate for the final snapshot.
    """

    def __init__(self, num_paths: int = 1, noise_var: float = 1.0,
                 doa_method: str = "rmusic", perfect_gains: bool = False,
                 polish: bool = True, filter_mode: str = "exact"):
        self.num_paths = num_paths
        self.noise_var = noise_var
        self.doa_method = doa_method
        self.perfect_gains = perfect_gains
        self.polish = polish
        self.filter_mode = filter_mode

    def _observation(self, Y: np.ndarray) -> ObservationBlock:
        Y = np.asarray(Y)
        if Y.ndim != 2:
            raise ValueError(f"Y must be 2-D (n_rx, T), got shape {Y.shape}")
        return ObservationBlock(
            snapshots=Y, noise_var=self.noise_var,
            sample_cov=Y @ Y.conj().T / Y.shape[1],
            emp_gain_power=np.zeros(self.num_paths))

    def fit(self, Y, realization: ChannelRealization | None = None):
        obs = self._observation(Y)
        true_rhos = None
        if self.perfect_gains:
            if realization is None:
                raise ValueError("perfect_gains=True requires the "
                                 "ground-truth realization in fit()")
            true_rhos = realization.rhos
        self.params_ = estimate_parameters(obs, self.num_paths,
                                           method=self.doa_method,
                                           true_rhos=true_rhos,
                                           polish=self.polish)
        self.filter_ = conditional_lmmse_filter(
            self.params_.omegas_hat, self.params_.rhos_hat,
            self.params_.noise_var_used, Y.shape[0], mode=self.filter_mode)
        return self

    def transform(self, Y) -> np.ndarray:
        return self.filter_.matrix @ np.asarray(Y)

    def predict(self, Y) -> np.ndarray:
        return self.filter_.matrix @ np.asarray(Y)[:, -1]

    def fit_predict(self, Y, realization=None) -> np.ndarray:
        return self.fit(Y, realization).predict(Y)


class GenieChannelEstimator(_EstimatorApiMixin):
    """Conditional LMMSE at the true parameters; the utopian reference."""

    def __init__(self, noise_var: float = 1.0):
        self.noise_var = noise_var

    def fit(self, Y, realization: ChannelRealization):
        Y = np.asarray(Y)
        self.filter_ = conditional_lmmse_filter(
            realization.omegas, realization.rhos, self.noise_var,
            Y.shape[0], mode="exact")
        return self

    def transform(self, Y) -> np.ndarray:
        return self.filter_.matrix @ np.asarray(Y)

    def predict(self, Y) -> np.ndarray:
        return self.filter_.matrix @ np.asarray(Y)[:, -1]

"""Exact fractional Gaussian noise model via Toeplitz recursions.

Fractional Gaussian noise (fGn) is the stationary zero-mean Gaussian
process with autocorrelation

    gamma(k) = (|k-1|^{2H} - 2|k|^{2H} + |k+1|^{2H}) / 2,

which decays hyperbolically like H(2H-1) k^{2H-2} for 1/2 < H < 1 (long
memory) and collapses to white noise at H = 1/2.  The covariance of n
consecutive points is Toeplitz, so the likelihood, the precision matrix
and exact draws are all available in O(n^2) time via the
Durbin-Levinson, Trench and Hosking recursions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import expit, logit

from . import _kernels
from .errors import BreakdownError, DomainError
from .observation import ObservationModel

LOG_2PI = _kernels.LOG_2PI

# innovation-variance floor, relative to unit marginal variance
VAR_FLOOR = 1e-13


def h_to_hurst(h: float) -> float:
    """Map the unconstrained parameter h to H = 1/2 + expit(h)/2."""
    return 0.5 + 0.5 * expit(h)


def hurst_to_h(H: float) -> float:
    """Inverse of :func:`h_to_hurst`; H = 1/2 maps to -inf."""
    if not 0.5 <= H < 1.0:
        raise DomainError(f"H must lie in [1/2, 1), got {H}")
    return float(logit(2.0 * H - 1.0))


@dataclass(frozen=True)
class HurstParams:
    """Long-memory parameters: Hurst exponent H in [1/2, 1) and scale sigma.

    ``h`` is the unconstrained transform of H (the whole real line maps
    onto the valid range, with the white-noise limit H = 1/2 at -inf).
    Both directions of the transform round-trip to machine precision.
    """

    H: float
    sigma: float = 1.0
    h: float = None

    def __post_init__(self):
        if not (np.isfinite(self.H) and 0.5 <= self.H < 1.0):
            raise DomainError(f"H must lie in [1/2, 1), got {self.H}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.h is None:
            object.__setattr__(self, "h", hurst_to_h(self.H))

    @classmethod
    def from_h(cls, h: float, sigma: float = 1.0) -> "HurstParams":
        return cls(H=h_to_hurst(h), sigma=sigma, h=float(h))


def fgn_acf(H: float, k_max: int) -> np.ndarray:
    """Autocorrelation gamma(0..k_max) of fGn with Hurst exponent H.

    gamma(0) = 1 exactly; for H = 1/2 the result is a unit spike
    (white noise).
    """
    if not (np.isfinite(H) and 0.5 <= H < 1.0):
        raise DomainError(f"H must lie in [1/2, 1), got {H}")
    if k_max < 0:
        raise DomainError("k_max must be nonnegative")
    k = np.arange(k_max + 1, dtype=np.float64)
    two_h = 2.0 * H
    g = 0.5 * (np.abs(k - 1.0) ** two_h - 2.0 * k**two_h + (k + 1.0) ** two_h)
    g[0] = 1.0
    return g


def dl_profile_pieces(x: np.ndarray, H: float) -> tuple[float, float]:
    """Durbin-Levinson pass: (log|Gamma(H)|, x^T Gamma(H)^{-1} x).

    Both pieces are at unit scale, so the scale enters the likelihood
    analytically and can be profiled out.  Raises
    :class:`~fgnmix.errors.BreakdownError` if an innovation variance
    falls below the floor.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("data must be a nonempty 1-d array")
    if not np.all(np.isfinite(x)):
        raise DomainError("data must be finite")
    gamma = fgn_acf(H, x.size - 1)
    logdet, quad, status = _kernels.dl_drive(
        gamma, x, np.empty(0), False, VAR_FLOOR
    )
    if status >= 0:
        raise BreakdownError(status)
    return float(logdet), float(quad)


def loglik_exact(x: np.ndarray, params: HurstParams) -> float:
    """Exact Gaussian log-likelihood of the series x under fGn."""
    logdet1, quad1 = dl_profile_pieces(x, params.H)
    n = len(x)
    s2 = params.sigma**2
    return -0.5 * n * LOG_2PI - 0.5 * (logdet1 + n * np.log(s2)) - 0.5 * quad1 / s2


def simulate_exact(params: HurstParams, n: int, seed) -> np.ndarray:
    """Draw one exact fGn path of length n (Hosking's method).

    Runs the same innovations recursion as the likelihood, feeding iid
    N(0,1) variates through the one-step predictive distributions, so a
    draw costs O(n^2).  ``seed`` feeds ``numpy.random.default_rng``.
    """
    if n <= 0:
        raise DomainError("n must be positive")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    gamma = fgn_acf(params.H, n - 1)
    x = np.empty(n)
    _, _, status = _kernels.dl_drive(gamma, x, z, True, VAR_FLOOR)
    if status >= 0:
        raise BreakdownError(status)
    return params.sigma * x


def _durbin_yw(r: np.ndarray) -> np.ndarray:
    """Solve the Yule-Walker system T a = -r for a unit-diagonal
    symmetric Toeplitz matrix T with first off-diagonal column r."""
    k_max = r.size
    a = np.zeros(k_max)
    a[0] = -r[0]
    beta = 1.0 - r[0] * r[0]
    for k in range(1, k_max):
        if beta <= VAR_FLOOR:
            raise BreakdownError(k)
        alpha = -(r[k] + a[:k] @ r[k - 1::-1]) / beta
        a[:k] += alpha * a[k - 1::-1]
        a[k] = alpha
        beta *= 1.0 - alpha * alpha
    if beta <= VAR_FLOOR:
        raise BreakdownError(k_max)
    return a


def trench_inverse(acf: np.ndarray, n: int, sigma: float = 1.0) -> np.ndarray:
    """Dense precision matrix of a stationary series in O(n^2).

    ``acf`` must provide autocorrelations gamma(0..n-1) with
    gamma(0) = 1.  Trench's recursion builds the inverse of the Toeplitz
    correlation matrix from its first column: with ``a`` the Yule-Walker
    predictor and ``u = (1 + r^T a)^{-1} (1, a)``, the remaining entries
    follow the rank-two row recursion

        B[i+1, j+1] = B[i, j] + (u[i+1] u[j+1] - u[n-1-i] u[n-1-j]) / u[0].

    The result is persymmetric; dividing by sigma^2 gives the precision.
    """
    acf = np.asarray(acf, dtype=np.float64)
    if n <= 0:
        raise DomainError("n must be positive")
    if acf.ndim != 1 or acf.size < n:
        raise DomainError(f"need acf values for lags 0..{n - 1}")
    if abs(acf[0] - 1.0) > 1e-12:
        raise DomainError("acf must be normalized with gamma(0) = 1")
    s2 = float(sigma) ** 2
    if n == 1:
        return np.array([[1.0 / s2]])
    r = acf[1:n]
    a = _durbin_yw(r)
    u0 = 1.0 / (1.0 + r @ a)
    if not np.isfinite(u0) or u0 <= 0.0:
        raise BreakdownError(n - 1)
    u = u0 * np.concatenate(([1.0], a))
    B = np.empty((n, n))
    B[0] = u
    for i in range(n - 1):
        B[i + 1, i + 1:] = B[i, i:n - 1] + (
            u[i + 1] * u[i + 1:] - u[n - 1 - i] * u[n - 1 - i:0:-1]
        ) / u0
    B = np.triu(B) + np.triu(B, 1).T
    return B / s2


def dense_conditional(
    cov: np.ndarray, obs: ObservationModel
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean/sd of a latent Gaussian vector given noisy data.

    Deliberately naive (dense inverses, O(n^3)); this is the reference
    route the banded machinery is validated against.  Noise precisions
    must be finite here; exact observations are handled by the banded
    path via submatrix extraction.
    """
    n_total = cov.shape[0]
    if obs.n_total != n_total:
        raise DomainError("covariance size must equal obs.n + obs.p")
    if obs.n_observed == 0:
        raise DomainError("at least one observed point is required")
    if np.any(np.isinf(obs.d)):
        raise DomainError("dense conditional requires finite noise precisions")
    d_full = np.zeros(n_total)
    d_full[: obs.n] = obs.d
    y_full = np.zeros(n_total)
    live = obs.d > 0
    y_full[: obs.n][live] = obs.y[live]
    np.linalg.cholesky(cov)  # SPD check, raises LinAlgError otherwise
    P = np.linalg.inv(cov) + np.diag(d_full)
    np.linalg.cholesky(P)
    P_inv = np.linalg.inv(P)
    mean = P_inv @ (d_full * y_full)
    sd = np.sqrt(np.diag(P_inv))
    return mean, sd


def conditional_exact(
    obs: ObservationModel, params: HurstParams
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean/sd over observed span plus horizon, exact model."""
    g = fgn_acf(params.H, obs.n_total - 1)
    cov = params.sigma**2 * toeplitz(g)
    return dense_conditional(cov, obs)

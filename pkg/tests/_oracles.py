"""Dense reference implementations used to validate the fast routes.

Deliberately naive numpy linear algebra (explicit inverses, full
matrices) sharing no code with the package internals.
"""
import numpy as np


def dense_loglik(x, cov):
    """Gaussian log-density via a dense Cholesky, no shortcuts."""
    n = len(x)
    L = np.linalg.cholesky(cov)
    alpha = np.linalg.solve(L, x)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * n * np.log(2.0 * np.pi) - 0.5 * logdet - 0.5 * alpha @ alpha


def partitioned_conditional(cov, y, d):
    """Conditional mean/sd of the full latent vector given noisy data.

    Observations y_i = x_i + N(0, 1/d_i) on the coordinates where
    d_i > 0 (d_i = +inf means noise-free).  Uses the brute-force
    partitioned-Gaussian formulas on the joint covariance of (x, y_obs).
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    idx = np.flatnonzero(d > 0)
    noise_var = np.zeros(idx.size)
    finite = np.isfinite(d[idx])
    noise_var[finite] = 1.0 / d[idx][finite]
    C_oo = cov[np.ix_(idx, idx)] + np.diag(noise_var)
    C_xo = cov[:, idx]
    K = C_xo @ np.linalg.inv(C_oo)
    mean = K @ y[idx]
    cond_cov = cov - K @ C_xo.T
    var = np.clip(np.diag(cond_cov), 0.0, None)
    return mean, np.sqrt(var)


def band_to_dense(band):
    """Expand symmetric band storage band[o, i] = A[i+o, i] to dense."""
    nb, dim = band.shape
    A = np.zeros((dim, dim))
    for o in range(nb):
        for i in range(dim - o):
            A[i + o, i] = band[o, i]
            A[i, i + o] = band[o, i]
    return A


def lower_band_to_dense(band):
    """Expand lower-triangular band storage to a dense triangular matrix."""
    nb, dim = band.shape
    L = np.zeros((dim, dim))
    for o in range(nb):
        for i in range(dim - o):
            L[i + o, i] = band[o, i]
    return L


def sample_acf(x, k_max, center=True):
    """Sample autocorrelation out to lag k_max.

    For long-memory series the mean-centered estimator is biased low by
    O(n^{2H-2}); pass center=False when the process mean is known zero.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean() if center else x
    denom = xc @ xc
    return np.array([xc[: n - k] @ xc[k:] for k in range(k_max + 1)]) / denom

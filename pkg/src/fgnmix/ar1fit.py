"""Fitting AR(1) mixtures to the long-memory autocorrelation.

A weighted sum of m independent AR(1) processes has autocorrelation
gamma_mix(k) = sum_j w_j phi_j^k.  For each Hurst exponent the weights
and coefficients are chosen to minimize the lag-weighted least-squares
distance

    f = sum_{k=1}^{k_max} (gamma_mix(k) - gamma(k))^2 / k

in an unconstrained parameterization: v with v_1 = 0 maps to weights by
softmax, and u maps to coefficients via phi_j = 1/(1 + sum_{i<=j}
exp(-u_i)), which keeps 1 > phi_1 > ... > phi_m > 0 by construction.
Optimized parameter vectors are precomputed on a grid in the transformed
Hurst parameter h and interpolated with natural cubic splines, so model
fitting never re-runs the optimizer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize
from scipy.special import expit

from .errors import DataFormatError, DomainError, FitError
from .exact import fgn_acf, h_to_hurst, hurst_to_h

K_MAX_DEFAULT = 1000
GRID_SIZE_DEFAULT = 101
H_TABLE_MIN = 0.51
H_TABLE_MAX = 0.99
# box for the unconstrained optimizer: inside it every theta maps to a
# strictly valid mixture even in double precision (phi gaps stay above
# rounding error for m <= 8); fitted optima sit far inside
THETA_BOUND = 16.0
_TABLE_MAGIC = "fgn-coeff-table v1"


def weights_from_v(v: np.ndarray) -> np.ndarray:
    """Softmax with the v_1 = 0 gauge already fixed by the caller."""
    e = np.exp(v - np.max(v))
    return e / e.sum()


def coeffs_from_u(u: np.ndarray) -> np.ndarray:
    """phi_j = 1/(1 + sum_{i<=j} exp(-u_i)), strictly decreasing."""
    log_s = np.logaddexp.accumulate(-np.asarray(u, dtype=np.float64))
    return expit(-log_s)


def params_from_mixture(w: np.ndarray, phi: np.ndarray) -> "FitParamVector":
    """Invert the softmax/logistic maps; requires valid (w, phi)."""
    w = np.asarray(w, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    v = np.log(w) - np.log(w[0])
    s = 1.0 / phi - 1.0
    e = np.diff(s, prepend=0.0)
    if np.any(e <= 0):
        raise DomainError("phi must be strictly decreasing in (0, 1)")
    return FitParamVector(v=v, u=-np.log(e))


@dataclass(frozen=True)
class FitParamVector:
    """Unconstrained mixture parameters: v (weights), u (coefficients)."""

    v: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "u", u)
        if v.ndim != 1 or u.ndim != 1 or v.size != u.size or v.size == 0:
            raise DomainError("v and u must be 1-d arrays of equal length m")
        if v[0] != 0.0:
            raise DomainError("gauge fixing requires v[0] == 0")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(u))):
            raise DomainError("parameters must be finite")

    @property
    def m(self) -> int:
        return self.v.size

    def to_theta(self) -> np.ndarray:
        """Free coordinates only: (v_2..v_m, u_1..u_m)."""
        return np.concatenate([self.v[1:], self.u])

    @classmethod
    def from_theta(cls, theta: np.ndarray, m: int) -> "FitParamVector":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != 2 * m - 1:
            raise DomainError(f"theta must have length {2 * m - 1}")
        return cls(v=np.concatenate([[0.0], theta[: m - 1]]), u=theta[m - 1:])


@dataclass(frozen=True)
class Ar1Mixture:
    """Weights and AR(1) coefficients of a fitted mixture."""

    w: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        phi = np.ascontiguousarray(self.phi, dtype=np.float64)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "phi", phi)
        if w.ndim != 1 or phi.ndim != 1 or w.size != phi.size or w.size == 0:
            raise DomainError("w and phi must be 1-d arrays of equal length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError("weights must be positive and sum to one")
        if np.any(phi <= 0) or np.any(phi >= 1) or np.any(np.diff(phi) >= 0):
            raise DomainError("phi must be strictly decreasing within (0, 1)")

    @property
    def m(self) -> int:
        return self.w.size

    @classmethod
    def from_params(cls, params: FitParamVector) -> "Ar1Mixture":
        return cls(w=weights_from_v(params.v), phi=coeffs_from_u(params.u))


def mixture_acf(mix: Ar1Mixture, k_max: int) -> np.ndarray:
    """Autocorrelation gamma_mix(0..k_max) = sum_j w_j phi_j^k."""
    if k_max < 0:
        raise DomainError("k_max must be nonnegative")
    k = np.arange(k_max + 1, dtype=np.float64)
    return (mix.phi[None, :] ** k[:, None]) @ mix.w


def _objective_and_grad(theta, m, gamma_target, k):
    """Lag-weighted squared ACF error and its exact gradient in theta."""
    v = np.concatenate([[0.0], theta[: m - 1]])
    u = theta[m - 1:]
    w = weights_from_v(v)
    phi = coeffs_from_u(u)
    P = phi[None, :] ** k[:, None]
    resid = P @ w - gamma_target
    f = np.dot(resid, resid / k)
    wk = 2.0 * resid / k
    g_w = P.T @ wk
    # d gamma / d phi_j = w_j k phi_j^{k-1}
    g_phi = w * ((2.0 * resid) @ (P / phi))
    g_v = (w * (g_w - g_w @ w))[1:]
    # d phi_j / d u_i = phi_j^2 exp(-u_i) for i <= j
    t = g_phi * phi * phi
    g_u = np.exp(-u) * np.cumsum(t[::-1])[::-1]
    return f, np.concatenate([g_v, g_u])


def fit_objective(params: FitParamVector, H: float, k_max: int = K_MAX_DEFAULT) -> float:
    """Objective value at the given parameters (no optimization)."""
    gamma = fgn_acf(H, k_max)[1:]
    k = np.arange(1, k_max + 1, dtype=np.float64)
    f, _ = _objective_and_grad(params.to_theta(), params.m, gamma, k)
    return float(f)


def default_start(m: int) -> FitParamVector:
    """Spread coefficients geometrically, uniform weights."""
    phi = expit(np.linspace(4.5, -1.5, m))
    return params_from_mixture(np.full(m, 1.0 / m), phi)


@dataclass(frozen=True)
class FitResult:
    params: FitParamVector
    objective: float
    n_iter: int

    @property
    def mixture(self) -> Ar1Mixture:
        return Ar1Mixture.from_params(self.params)


def fit_single(
    H: float,
    m: int,
    k_max: int = K_MAX_DEFAULT,
    start: FitParamVector | None = None,
    maxiter: int = 1000,
) -> FitResult:
    """Fit one mixture by quasi-Newton descent with the exact gradient.

    Keeps the better of the start and the optimizer output; if the
    gradient-based run reports failure a simplex polish is attempted
    before giving up with :class:`~fgnmix.errors.FitError`.
    """
    if m < 1:
        raise DomainError("m must be at least 1")
    gamma = fgn_acf(H, k_max)[1:]
    k = np.arange(1, k_max + 1, dtype=np.float64)
    if start is None:
        start = default_start(m)
    if start.m != m:
        raise DomainError("start has the wrong number of components")
    theta0 = np.clip(start.to_theta(), -THETA_BOUND, THETA_BOUND)
    fun = lambda th: _objective_and_grad(th, m, gamma, k)
    f0 = fun(theta0)[0]
    res = minimize(
        fun,
        theta0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(-THETA_BOUND, THETA_BOUND)] * (2 * m - 1),
        options={"maxiter": maxiter, "ftol": 1e-16, "gtol": 1e-12},
    )
    best_theta, best_f = (res.x, res.fun) if res.fun < f0 else (theta0, f0)
    n_iter = int(res.nit)
    if not res.success:
        polish = minimize(
            lambda th: fun(th)[0],
            best_theta,
            method="Nelder-Mead",
            options={"maxiter": 4000, "fatol": 1e-16, "xatol": 1e-12},
        )
        n_iter += int(polish.nit)
        if polish.fun < best_f:
            best_theta, best_f = polish.x, polish.fun
        if not (res.success or polish.success):
            raise FitError(
                f"optimization did not converge at H={H}, m={m}",
                best_theta=best_theta,
                best_objective=float(best_f),
            )
    params = FitParamVector.from_theta(best_theta, m)
    return FitResult(params=params, objective=float(best_f), n_iter=n_iter)


def embed_params(params: FitParamVector, v_extra: float = -14.0) -> FitParamVector:
    """Lift an m-component parameter vector to m+1 components.

    The extra component sits below the current smallest coefficient with
    weight exp(v_extra)/normalizer; at the default the objective moves
    by a relative ~1e-6 only, so descent from here recovers (at least)
    the smaller mixture's fit.
    """
    phi = coeffs_from_u(params.u)
    v_new = np.concatenate([params.v, [v_extra]])
    phi_new = np.concatenate([phi, [phi[-1] / 2.0]])
    s = 1.0 / phi_new - 1.0
    u_new = -np.log(np.diff(s, prepend=0.0))
    return FitParamVector(v=v_new, u=u_new)


@dataclass
class CoeffTable:
    """Optimized mixture parameters on an h grid, splined for lookup.

    The grid (not the spline) is the source of truth: splines are refit
    from the stored rows whenever a table is constructed or loaded.
    """

    m: int
    k_max: int
    h: np.ndarray
    params: np.ndarray
    objective: np.ndarray
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.h = np.ascontiguousarray(self.h, dtype=np.float64)
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        self.objective = np.ascontiguousarray(self.objective, dtype=np.float64)
        g = self.h.size
        if g < 4:
            raise DomainError("need at least 4 grid points for cubic splines")
        if np.any(np.diff(self.h) <= 0):
            raise DomainError("h grid must be strictly increasing")
        if self.params.shape != (g, 2 * self.m - 1):
            raise DomainError("params grid has the wrong shape")
        if self.objective.shape != (g,):
            raise DomainError("objective grid has the wrong shape")
        self._spline = CubicSpline(self.h, self.params, axis=0, bc_type="natural")

    @property
    def grid_size(self) -> int:
        return self.h.size

    @property
    def H_min(self) -> float:
        return h_to_hurst(self.h[0])

    @property
    def H_max(self) -> float:
        return h_to_hurst(self.h[-1])

    def lookup_params(self, H: float) -> FitParamVector:
        h = hurst_to_h(H)
        if not (self.h[0] <= h <= self.h[-1]):
            raise DomainError(
                f"H={H} outside table range [{self.H_min:.4f}, {self.H_max:.4f}]"
            )
        return FitParamVector.from_theta(self._spline(h), self.m)

    def lookup(self, H: float) -> Ar1Mixture:
        return Ar1Mixture.from_params(self.lookup_params(H))

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(
                f"{_TABLE_MAGIC} m={self.m} kmax={self.k_max} grid={self.grid_size}\n"
            )
            for g in range(self.grid_size):
                row = [self.h[g], *self.params[g], self.objective[g]]
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")

    @classmethod
    def from_text(cls, text: str) -> "CoeffTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise DataFormatError(1, "empty coefficient table")
        head = lines[0].split()
        if " ".join(head[:2]) != _TABLE_MAGIC or len(head) != 5:
            raise DataFormatError(1, f"bad table header: {lines[0]!r}")
        try:
            meta = dict(tok.split("=", 1) for tok in head[2:])
            m = int(meta["m"])
            k_max = int(meta["kmax"])
            grid = int(meta["grid"])
        except (ValueError, KeyError) as exc:
            raise DataFormatError(1, f"bad table header: {exc}") from None
        if len(lines) - 1 != grid:
            raise DataFormatError(
                len(lines), f"expected {grid} rows, found {len(lines) - 1}"
            )
        width = 2 * m + 1
        rows = np.empty((grid, width))
        for i, ln in enumerate(lines[1:], start=2):
            parts = ln.split()
            if len(parts) != width:
                raise DataFormatError(i, f"expected {width} fields, got {len(parts)}")
            try:
                rows[i - 2] = [float(tok) for tok in parts]
            except ValueError as exc:
                raise DataFormatError(i, str(exc)) from None
        return cls(
            m=m,
            k_max=k_max,
            h=rows[:, 0],
            params=rows[:, 1:width - 1],
            objective=rows[:, -1],
        )

    @classmethod
    def load(cls, path) -> "CoeffTable":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_text(fh.read())


def build_table(
    m: int,
    k_max: int = K_MAX_DEFAULT,
    grid_size: int = GRID_SIZE_DEFAULT,
    n_restarts: int = 5,
    seed: int = 0,
    embed_from: CoeffTable | None = None,
    H_min: float = H_TABLE_MIN,
    H_max: float = H_TABLE_MAX,
) -> CoeffTable:
    """Optimize the mixture over an equally spaced H grid.

    Walks the grid upward reusing the previous optimum as a warm start,
    plus the default start, ``n_restarts`` random perturbations, and (if
    ``embed_from`` is given, a table with one component less) the
    embedded smaller mixture, which guarantees the m-component objective
    never exceeds the (m-1)-component one on the shared grid.
    """
    if embed_from is not None and embed_from.m != m - 1:
        raise DomainError("embed_from must have exactly one component less")
    H_grid = np.linspace(H_min, H_max, grid_size)
    rng = np.random.default_rng(seed)
    thetas = np.empty((grid_size, 2 * m - 1))
    objs = np.empty(grid_size)
    prev: np.ndarray | None = None
    for g, H in enumerate(H_grid):
        starts = []
        if prev is not None:
            starts.append(FitParamVector.from_theta(prev, m))
        if embed_from is not None:
            small = embed_from.lookup_params(H)
            starts.append(embed_params(small))
            starts.append(embed_params(small, v_extra=-2.0))
        starts.append(default_start(m))
        base = prev if prev is not None else default_start(m).to_theta()
        for _ in range(n_restarts):
            jitter = np.clip(
                base + rng.normal(0.0, 0.5, 2 * m - 1), -THETA_BOUND, THETA_BOUND
            )
            starts.append(FitParamVector.from_theta(jitter, m))
        best: FitResult | None = None
        last_err: FitError | None = None
        for s in starts:
            try:
                fr = fit_single(H, m, k_max, start=s)
            except FitError as err:
                last_err = err
                continue
            if best is None or fr.objective < best.objective:
                best = fr
        if best is None:
            raise FitError(
                f"table build failed at grid point {g} (H={H:.6f}): {last_err}",
                best_theta=None if last_err is None else last_err.best_theta,
                best_objective=None if last_err is None else last_err.best_objective,
            )
        thetas[g] = best.params.to_theta()
        objs[g] = best.objective
        prev = thetas[g]
    h_grid = np.array([hurst_to_h(Hv) for Hv in H_grid])
    return CoeffTable(m=m, k_max=k_max, h=h_grid, params=thetas, objective=objs)


def load_packaged_table(m: int) -> CoeffTable:
    """Load one of the coefficient tables shipped with the package."""
    name = f"ar1-m{m}-k{K_MAX_DEFAULT}.txt"
    ref = resources.files("fgnmix").joinpath("tables").joinpath(name)
    if not ref.is_file():
        raise FileNotFoundError(f"no packaged coefficient table for m={m} ({name})")
    return CoeffTable.from_text(ref.read_text(encoding="ascii"))

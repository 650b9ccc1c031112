"""Observation model: noisy/partial measurements of a latent series.

The latent process x_1..x_{n+p} is observed through y_i = x_i + eps_i on
the first n coordinates, eps_i ~ N(0, 1/d_i) independent.  Precision
d_i = 0 marks a missing value (y_i is ignored and may be NaN),
d_i = +inf an exact observation.  The trailing p coordinates are a
forecast horizon with no data attached.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ObservationModel:
    y: np.ndarray
    d: np.ndarray
    p: int = 0

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        d = np.ascontiguousarray(self.d, dtype=np.float64)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "p", int(self.p))
        if y.ndim != 1 or d.ndim != 1 or y.shape != d.shape:
            raise DomainError("y and d must be 1-d arrays of equal length")
        if self.p < 0:
            raise DomainError("horizon length p must be nonnegative")
        if np.any(np.isnan(d)) or np.any(d < 0):
            raise DomainError("noise precisions must satisfy d >= 0")
        live = d > 0
        if not np.all(np.isfinite(y[live])):
            raise DomainError("observed values must be finite where d > 0")

    @property
    def n(self) -> int:
        """Number of (potentially) observed coordinates."""
        return self.y.shape[0]

    @property
    def n_total(self) -> int:
        return self.n + self.p

    @property
    def observed(self) -> np.ndarray:
        """Boolean mask over the first n coordinates: d > 0."""
        return self.d > 0

    @property
    def n_observed(self) -> int:
        return int(np.count_nonzero(self.d > 0))

    @classmethod
    def exact(cls, y, p: int = 0) -> "ObservationModel":
        """All points observed without noise (d = +inf)."""
        y = np.asarray(y, dtype=np.float64)
        return cls(y=y, d=np.full(y.shape, np.inf), p=p)

    @classmethod
    def noisy(cls, y, d, p: int = 0) -> "ObservationModel":
        return cls(y=np.asarray(y, dtype=np.float64),
                   d=np.asarray(d, dtype=np.float64), p=p)

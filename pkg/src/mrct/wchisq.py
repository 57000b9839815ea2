"""Monte-Carlo medians and quantiles of weighted sums of independent chi2(1) variables."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class ChiSqDraws:
    """Frozen ``N x r`` matrix of chi2(1) draws plus where it came from."""

    matrix: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1:
            raise DimensionError("draws must be a non-empty 2-d matrix")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise DomainError("chi-square draws must be finite and non-negative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def N(self):
        return self.matrix.shape[0]

    @property
    def r(self):
        return self.matrix.shape[1]


def draw_chisq(N: int, r: int, seed, *stream) -> ChiSqDraws:
    """Draw ``N*r`` squared standard normals from the named substream of ``seed``."""
    if N < 1 or r < 1:
        raise DomainError("N and r must be positive")
    rng = substream(seed, "chisq", *stream)
    z = rng.standard_normal((N, r))
    return ChiSqDraws(z * z, {"seed": int(seed), "stream": [str(s) for s in stream]})


def weighted_sums(weights, draws: ChiSqDraws) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    if not np.all(np.isfinite(w)):
        raise DomainError("weights must be finite")
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    if w.size > draws.r:
        raise DimensionError(f"{w.size} weights but only {draws.r} draw columns")
    if w.size == 0:
        return np.zeros(draws.N)
    return draws.matrix[:, : w.size] @ w


def wchisq_median(weights, draws: ChiSqDraws) -> float:
    return float(np.median(weighted_sums(weights, draws)))


def wchisq_quantile(weights, q: float, draws: ChiSqDraws) -> float:
    """Empirical ``q``-quantile: the ``ceil(q*N)``-th order statistic (1-based)."""
    if not 0.0 < q < 1.0:
        raise DomainError("q must lie in (0, 1)")
    s = weighted_sums(weights, draws)
    # round first: 0.99 * 2000 evaluates to 1980.0000000000002
    k = max(1, math.ceil(round(q * s.size, 9)))
    return float(np.partition(s, k - 1)[k - 1])

"""Gaussian-process sampling and the three contamination models used for evaluation.

Model 1: ``30 t (1-t)^1.5`` vs contaminated ``30 t^1.5 (1-t)``, OU noise (0.3, 0.3).
Model 2: ``4 t`` vs ``4 t + (-1)^u 1.8 + (0.02 pi)^-0.5 exp(-(t-mu)^2 / 0.02)``, OU noise (1, 1).
Model 3: ``4 t`` vs ``4 t + 2 sin(t (t + mu) pi)``, OU noise (1, 1).

``u ~ Bernoulli(0.5)`` and ``mu ~ U[0.25, 0.75]`` are drawn per contaminated curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import substream
from .errors import DomainError, NumericalError
from .funcdata import FunctionalSample, Grid


@dataclass(frozen=True)
class KernelSpec:
    """Ornstein-Uhlenbeck kernel ``scale * exp(-|s - t| / range)``."""

    scale: float
    range: float
    family: str = "ou"

    def __post_init__(self):
        if self.family != "ou":
            raise DomainError(f"unsupported kernel family {self.family!r}")
        if not (self.scale > 0 and self.range > 0):
            raise DomainError("kernel scale and range must be positive")

    def matrix(self, points):
        t = np.asarray(points, dtype=float)
        return self.scale * np.exp(-np.abs(t[:, None] - t[None, :]) / self.range)


MODEL_KERNELS = {
    1: KernelSpec(0.3, 0.3),
    2: KernelSpec(1.0, 1.0),
    3: KernelSpec(1.0, 1.0),
}


@dataclass(frozen=True)
class ModelSpec:
    model_id: int
    n: int
    p: int
    c: float
    seed: int = 0

    def __post_init__(self):
        if self.model_id not in MODEL_KERNELS:
            raise DomainError(f"unknown model {self.model_id}")
        if not 0.0 <= self.c < 1.0:
            raise DomainError("contamination rate must lie in [0, 1)")
        if self.n < 0 or self.p < 2:
            raise DomainError("need n >= 0 and p >= 2")

    @property
    def n_outliers(self):
        return int(math.floor(self.n * self.c))

    @property
    def kernel(self):
        return MODEL_KERNELS[self.model_id]


def kernel_eval(spec: KernelSpec, s: float, t: float) -> float:
    return float(spec.scale * math.exp(-abs(s - t) / spec.range))


def sqrt_factor(K):
    """Symmetric square root of a PSD matrix; negative eigenvalues are clipped to 0."""
    vals, vecs = np.linalg.eigh(K)
    bad = np.flatnonzero(vals < -1e-8 * max(1.0, abs(vals).max()))
    if bad.size:
        raise NumericalError(
            f"kernel matrix is not positive semi-definite: eigenvalue #{bad[0]} is {vals[bad[0]]:.3g}"
        )
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def gp_sample(spec: KernelSpec, grid: Grid, n: int, seed, *, stream=("gp",)) -> FunctionalSample:
    """``n`` zero-mean Gaussian-process paths on ``grid``."""
    if n < 0:
        raise DomainError("n must be non-negative")
    rng = substream(seed, *stream)
    root = sqrt_factor(spec.matrix(grid.points))
    z = rng.standard_normal((n, grid.p))
    return FunctionalSample(grid, (z @ root).reshape(n, grid.p))


def main_mean(model_id: int, t):
    t = np.asarray(t, dtype=float)
    if model_id == 1:
        return 30.0 * t * (1.0 - t) ** 1.5
    return 4.0 * t


def contaminated_mean(model_id: int, t, u: int = 0, mu: float = 0.5):
    t = np.asarray(t, dtype=float)
    if model_id == 1:
        return 30.0 * t**1.5 * (1.0 - t)
    if model_id == 2:
        bump = (0.02 * math.pi) ** -0.5 * np.exp(-((t - mu) ** 2) / 0.02)
        return 4.0 * t + (-1) ** u * 1.8 + bump
    return 4.0 * t + 2.0 * np.sin(t * (t + mu) * math.pi)


def model_dataset(spec: ModelSpec) -> FunctionalSample:
    grid = Grid.uniform(spec.p)
    t = grid.points
    noise = gp_sample(spec.kernel, grid, spec.n, spec.seed).values
    rng = substream(spec.seed, "contamination")
    n_out = spec.n_outliers
    rows = np.sort(rng.permutation(spec.n)[:n_out])
    labels = np.zeros(spec.n, dtype=bool)
    labels[rows] = True
    u = rng.integers(0, 2, size=n_out)
    mu = rng.uniform(0.25, 0.75, size=n_out)
    values = np.tile(main_mean(spec.model_id, t), (spec.n, 1))
    for j, row in enumerate(rows):
        values[row] = contaminated_mean(spec.model_id, t, int(u[j]), float(mu[j]))
    return FunctionalSample(grid, values + noise, labels)


def true_kernel_matrix(model_id: int, grid: Grid):
    return MODEL_KERNELS[model_id].matrix(grid.points)

"""Discretized functional samples and their quadrature inner product.

Curves live on a common, strictly increasing grid ``t_1 < ... < t_p``. The L2
inner product is approximated by the rectangle rule with a single weight
``delta = (t_p - t_1) / p`` so that constants integrate exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class Grid:
    points: np.ndarray
    weight: float = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DimensionError("grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise DomainError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise DomainError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weight", float((pts[-1] - pts[0]) / pts.size))

    @classmethod
    def uniform(cls, p, a=0.0, b=1.0):
        return cls(np.linspace(a, b, p))

    @property
    def p(self):
        return self.points.size

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class FunctionalSample:
    """``n`` curves evaluated on a shared grid (row ``i`` is curve ``i``).

    ``labels`` is optional ground truth (True = outlier) and is only ever used
    for evaluation.
    """

    grid: Grid
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2:
            raise DimensionError("values must be a 2-d array (n curves x p points)")
        if vals.shape[1] != self.grid.p:
            raise DimensionError(
                f"values have {vals.shape[1]} columns but the grid has {self.grid.p} points"
            )
        if not np.all(np.isfinite(vals)):
            raise DomainError("functional sample contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=bool)
            if lab.shape != (vals.shape[0],):
                raise DimensionError("labels must have one entry per curve")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    # Uniform accessors shared with CoefficientSample; the estimator only needs
    # a data matrix and the quadrature weight that turns dot products into
    # inner products.
    @property
    def data(self):
        return self.values

    @property
    def weight(self):
        return self.grid.weight

    def trimmed_cov(self, H):
        return trimmed_cov_matrix(self, H)


@dataclass(frozen=True)
class SubsetH:
    """Sorted, distinct row indices of an h-subset."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise DomainError("subset indices must be strictly increasing")
        if idx and idx[0] < 0:
            raise DomainError("subset indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices, n=None):
        """Build from any iterable of indices; validate against ``n`` if given."""
        sub = cls(tuple(sorted(set(int(i) for i in indices))))
        if n is not None:
            sub.check(n)
        return sub

    @property
    def h(self):
        return len(self.indices)

    def check(self, n):
        h = len(self.indices)
        lo = -(-n // 2)
        if not lo <= h <= n:
            raise DomainError(f"subset size {h} outside [{lo}, {n}]")
        if self.indices and self.indices[-1] >= n:
            raise DomainError(f"subset index {self.indices[-1]} out of range for n={n}")
        return self

    def mask(self, n):
        m = np.zeros(n, dtype=bool)
        m[list(self.indices)] = True
        return m

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def inner_product(f, g, grid: Grid) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (grid.p,) or g.shape != (grid.p,):
        raise DimensionError(
            f"curves of shape {f.shape} and {g.shape} do not match a grid of {grid.p} points"
        )
    return float(grid.weight * np.dot(f, g))


def _rows(sample, H: SubsetH):
    if len(H) == 0:
        raise DomainError("empty subset")
    H.check(sample.n)
    return sample.data[list(H.indices)]


def trimmed_mean(sample, H: SubsetH) -> np.ndarray:
    return _rows(sample, H).mean(axis=0)


def trimmed_cov_matrix(sample, H: SubsetH) -> np.ndarray:
    """Kernel-unit covariance of the rows in ``H``, both factors centered at the subset mean."""
    rows = _rows(sample, H)
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / rows.shape[0]
    return 0.5 * (cov + cov.T)

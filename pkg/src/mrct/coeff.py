"""Basis-coefficient representation for sparse or irregularly observed curves.

Curves are expanded in clamped B-splines ``Phi`` (Gram matrix ``G``), then
re-expressed in the orthonormal system ``G^{-1/2} Phi`` with coefficients
``C G^{1/2}``.  In an orthonormal basis the L2 geometry of the curves is the
Euclidean geometry of the coefficient rows, so the estimator runs directly on
the ``n x M`` coefficient matrix with unit quadrature weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MrctConfig, MrctResult, mrct_fit
from .errors import DimensionError, DomainError, NumericalError, UnderdeterminedCurveError
from .funcdata import SubsetH


@dataclass(frozen=True)
class BasisSpec:
    M: int
    degree: int = 3
    a: float = 0.0
    b: float = 1.0
    family: str = "bspline"

    def __post_init__(self):
        if self.family != "bspline":
            raise DomainError(f"unsupported basis family {self.family!r}")
        if self.degree < 0 or self.M < self.degree + 1:
            raise DomainError(f"need M >= degree + 1 (got M={self.M}, degree={self.degree})")
        if not self.b > self.a:
            raise DomainError("basis domain must have b > a")

    @property
    def knots(self) -> np.ndarray:
        """Clamped knot vector of length ``M + degree + 1`` with equidistant interior knots."""
        inner = np.linspace(self.a, self.b, self.M - self.degree + 1)
        return np.concatenate([np.full(self.degree, self.a), inner, np.full(self.degree, self.b)])

    @property
    def breakpoints(self):
        return np.linspace(self.a, self.b, self.M - self.degree + 1)


def basis_matrix(basis: BasisSpec, t) -> np.ndarray:
    """Rows of B-spline values (Cox-de Boor recursion), one row per point in ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < basis.a) or np.any(t > basis.b) or not np.all(np.isfinite(t)):
        raise DomainError(f"evaluation points must lie in [{basis.a}, {basis.b}]")
    kn = basis.knots
    d = basis.degree
    n_int = kn.size - 1
    # degree 0: indicator of [k_i, k_{i+1}); the right end belongs to the last non-empty span
    B = ((kn[:-1] <= t[:, None]) & (t[:, None] < kn[1:])).astype(float)
    last = np.flatnonzero(kn[:-1] < kn[1:])[-1]
    B[t == basis.b, :] = 0.0
    B[t == basis.b, last] = 1.0
    for p in range(1, d + 1):
        nxt = np.zeros((t.size, n_int - p))
        for i in range(n_int - p):
            left = kn[i + p] - kn[i]
            right = kn[i + p + 1] - kn[i + 1]
            if left > 0:
                nxt[:, i] += (t - kn[i]) / left * B[:, i]
            if right > 0:
                nxt[:, i] += (kn[i + p + 1] - t) / right * B[:, i + 1]
        B = nxt
    return B


def basis_eval(basis: BasisSpec, t: float) -> np.ndarray:
    return basis_matrix(basis, [t])[0]


def gram_matrix(basis: BasisSpec) -> np.ndarray:
    """``G_ij = int phi_i phi_j`` by Gauss-Legendre on every knot span.

    ``degree + 1`` nodes per span integrate the degree ``2 * degree``
    piecewise-polynomial products exactly.
    """
    nodes, wts = np.polynomial.legendre.leggauss(basis.degree + 1)
    bp = basis.breakpoints
    G = np.zeros((basis.M, basis.M))
    for lo, hi in zip(bp[:-1], bp[1:]):
        half = 0.5 * (hi - lo)
        x = lo + half * (nodes + 1.0)
        Bx = basis_matrix(basis, x)
        G += (Bx * (half * wts)[:, None]).T @ Bx
    return 0.5 * (G + G.T)


def _sym_power(gram, power, tol=1e-12):
    vals, vecs = np.linalg.eigh(gram)
    if not vals[0] > tol * max(vals[-1], 0.0) or not vals[-1] > 0:
        raise NumericalError(f"Gram matrix is not positive definite (smallest eigenvalue {vals[0]:.3g})")
    return (vecs * vals**power) @ vecs.T


def orthonormalize(C, gram) -> np.ndarray:
    """Coefficients in the orthonormal system ``G^{-1/2} Phi``: ``C G^{1/2}``."""
    C = np.asarray(C, dtype=float)
    gram = np.asarray(gram, dtype=float)
    if C.ndim != 2 or gram.shape != (C.shape[1], C.shape[1]):
        raise DimensionError("coefficient matrix and Gram matrix do not conform")
    return C @ _sym_power(gram, 0.5)


@dataclass(frozen=True)
class SparseCurves:
    """Per-curve observation times and values; times are sorted on construction."""

    ids: tuple
    times: tuple
    values: tuple

    def __post_init__(self):
        if not (len(self.ids) == len(self.times) == len(self.values)):
            raise DimensionError("ids, times and values must have equal length")
        ts, vs = [], []
        for cid, t, v in zip(self.ids, self.times, self.values):
            t = np.asarray(t, dtype=float)
            v = np.asarray(v, dtype=float)
            if t.shape != v.shape or t.ndim != 1 or t.size < 1:
                raise DimensionError(f"curve {cid!r}: times and values must be equal-length, non-empty")
            if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
                raise DomainError(f"curve {cid!r} has non-finite entries")
            o = np.argsort(t, kind="stable")
            ts.append(t[o])
            vs.append(v[o])
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "times", tuple(ts))
        object.__setattr__(self, "values", tuple(vs))

    @property
    def n(self):
        return len(self.ids)

    @property
    def counts(self):
        return [t.size for t in self.times]

    @property
    def domain(self):
        return min(t[0] for t in self.times), max(t[-1] for t in self.times)


@dataclass(frozen=True)
class CoefficientSample:
    """Coefficient rows of ``n`` curves; ``basis=None`` means an abstract orthonormal system."""

    basis: BasisSpec | None
    coeffs: np.ndarray
    orthonormalized: bool = True
    ids: tuple | None = None
    labels: np.ndarray | None = None
    _gram: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        C = np.array(self.coeffs, dtype=float)
        if C.ndim != 2 or C.shape[0] < 2:
            raise DimensionError("need an n x M coefficient matrix with n >= 2")
        if self.basis is not None and C.shape[1] != self.basis.M:
            raise DimensionError(f"{C.shape[1]} coefficient columns for a basis of size {self.basis.M}")
        if not np.all(np.isfinite(C)):
            raise DomainError("coefficients must be finite")
        C.setflags(write=False)
        object.__setattr__(self, "coeffs", C)

    @property
    def n(self):
        return self.coeffs.shape[0]

    @property
    def data(self):
        if not self.orthonormalized:
            raise DomainError("the estimator needs coefficients in an orthonormal basis")
        return self.coeffs

    @property
    def weight(self):
        return 1.0

    def trimmed_cov(self, H):
        return coeff_trimmed_cov(self.data, H)

    def evaluate(self, t) -> np.ndarray:
        """Curve values at ``t`` (rows = curves)."""
        if self.basis is None:
            raise DomainError("abstract coefficient samples cannot be evaluated")
        B = basis_matrix(self.basis, t)
        if not self.orthonormalized:
            return self.coeffs @ B.T
        gram = self._gram if self._gram is not None else gram_matrix(self.basis)
        return self.coeffs @ _sym_power(gram, -0.5) @ B.T


def fit_coefficients(curves: SparseCurves, basis: BasisSpec) -> CoefficientSample:
    """Per-curve least squares on the B-spline design, then orthonormalize."""
    rows = []
    for cid, t, v in zip(curves.ids, curves.times, curves.values):
        if t.size < basis.M:
            raise UnderdeterminedCurveError(cid, t.size, basis.M)
        X = basis_matrix(basis, t)
        coef, _, rank, _ = np.linalg.lstsq(X, v, rcond=None)
        if rank < basis.M:
            raise NumericalError(
                f"curve {cid!r}: design matrix has rank {rank} < {basis.M} (coincident or clustered times)"
            )
        rows.append(coef)
    gram = gram_matrix(basis)
    C = orthonormalize(np.vstack(rows), gram)
    return CoefficientSample(basis, C, True, tuple(curves.ids), _gram=gram)


def coeff_trimmed_cov(C, H: SubsetH) -> np.ndarray:
    """``(1/h) C' P C`` with ``P = diag(1_H) - (1/h) 1_H 1_H'``."""
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    H.check(n)
    h = H.h
    ind = H.mask(n).astype(float)
    P = np.diag(ind) - np.outer(ind, ind) / h
    cov = C.T @ P @ C / h
    return 0.5 * (cov + cov.T)


def coeff_distances(C, H: SubsetH, a: float) -> np.ndarray:
    """Squared alpha-Mahalanobis distances from the coefficient matrix directly."""
    if not a > 0:
        raise DomainError("regularization must be positive")
    C = np.asarray(C, dtype=float)
    cov = coeff_trimmed_cov(C, H)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    W = (vecs * (vals / (vals + a) ** 2)) @ vecs.T
    n = C.shape[0]
    E = np.eye(n) - H.mask(n).astype(float)[None, :] / H.h  # row i: (e_i - 1_H / h)'
    Y = E @ C
    return np.einsum("ij,jk,ik->i", Y, W, Y)


def mrct_fit_coeff(C: CoefficientSample, cfg: MrctConfig, alpha=None) -> MrctResult:
    """The estimator on coefficient rows; ``M`` may exceed ``n``."""
    return mrct_fit(C, cfg, alpha=alpha)

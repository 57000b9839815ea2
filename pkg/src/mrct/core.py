"""Minimum Regularized Covariance Trace estimator.

The estimator searches for an h-subset ``H`` that is a fixed point of the
concentration map: standardize every curve with the trimmed mean/covariance of
``H`` (Tikhonov-regularized with parameter ``alpha``), keep the ``h`` curves
with the smallest squared alpha-Mahalanobis distance, repeat.  Among the fixed
points reached from several starts the one with the smallest mean robust
distance over its own members wins.

Scaling conventions
-------------------
Covariance matrices are kept in kernel units.  Eigenvalues are moved to
operator scale (multiplied by the quadrature weight) exactly once, in
:func:`eigensystem`; eigenvectors stay Euclidean-orthonormal on the grid, so a
projection ``<psi_j, x>^2`` equals ``weight * (u_j . x)^2``.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._rng import substream
from .errors import ConvergenceError, DegenerateSubsetError, DomainError, EstimationError, NumericalError
from .funcdata import SubsetH
from .metrics import excess_kurtosis_sq
from .wchisq import ChiSqDraws, draw_chisq, wchisq_median, wchisq_quantile

log = logging.getLogger(__name__)

SELECTIONS = ("trace", "trace_q", "kurtosis")


@dataclass(frozen=True)
class MrctConfig:
    """Tuning knobs of :func:`mrct_fit`.

    ``h`` wins over ``h_frac`` when given; otherwise ``h = floor(h_frac * n)``.
    ``alpha`` is a positive float or ``"auto"`` (resolved by
    :func:`mrct.alpha_select.fit_auto`).
    """

    alpha: float | str = "auto"
    h: int | None = None
    h_frac: float = 0.75
    n_starts: int = 10
    median_start: bool = True
    eps_k: float = 1e-6
    max_k_iters: int = 100
    max_outer_iters: int = 50
    cutoff_q: float = 0.99
    mc_N: int = 2000
    selection: str = "trace"
    selection_q: float = 0.75
    rank_tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.cutoff_q < 1.0:
            raise DomainError("cutoff_q must lie in (0, 1)")
        if self.selection not in SELECTIONS:
            raise DomainError(f"selection must be one of {SELECTIONS}")
        if not 0.0 < self.selection_q <= 1.0:
            raise DomainError("selection_q must lie in (0, 1]")
        if self.alpha != "auto" and not (isinstance(self.alpha, (int, float)) and self.alpha > 0):
            raise DomainError("alpha must be positive or 'auto'")
        if self.n_starts < 0 or (self.n_starts == 0 and not self.median_start):
            raise DomainError("at least one start is required")
        if self.eps_k <= 0 or self.max_k_iters < 1 or self.max_outer_iters < 1 or self.mc_N < 1:
            raise DomainError("tolerances and iteration budgets must be positive")

    def resolve_h(self, n: int) -> int:
        h = self.h if self.h is not None else int(math.floor(self.h_frac * n))
        lo = -(-n // 2)
        if not lo <= h <= n:
            raise DomainError(f"h={h} outside [{lo}, {n}] for n={n}")
        return h

    def with_alpha(self, alpha):
        return dataclasses.replace(self, alpha=float(alpha))

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class EigenSystem:
    eigvals: np.ndarray  # operator scale, descending
    eigvecs: np.ndarray  # d x rank, Euclidean-orthonormal columns
    mean: np.ndarray
    subset: SubsetH
    weight: float
    k: float = 1.0

    @property
    def rank(self):
        return self.eigvals.size

    @property
    def robust_eigvals(self):
        return self.k * self.eigvals

    def covariance(self):
        """Kernel-unit trimmed covariance rebuilt from the retained spectrum (no ``k``)."""
        return (self.eigvecs * (self.eigvals / self.weight)) @ self.eigvecs.T


class KSolve(NamedTuple):
    k: float
    distances: np.ndarray  # squared alpha-Mahalanobis distances at alpha / k0, before the 1/k rescaling
    n_iter: int
    converged: bool


class CStep(NamedTuple):
    subset: SubsetH  # H1
    k: float
    distances: np.ndarray  # robust squared distances k^-1 d^2 for all n curves
    eig: EigenSystem  # estimates of H0 with k attached
    objective: float  # mean robust distance over H0
    k_converged: bool


@dataclass
class ChainResult:
    start: SubsetH
    subset: SubsetH
    step: CStep
    n_iter: int
    fixed_point: bool
    cycled: bool = False


@dataclass
class MrctResult:
    subset: SubsetH
    alpha: float
    k: float
    distances: np.ndarray
    cutoff: float
    flags: np.ndarray
    trace_objective: float
    n_outer_iters: int
    n_starts_converged: int
    converged: bool
    eig: EigenSystem
    config: MrctConfig
    k_converged: bool = True
    selection_score: float = float("nan")
    chains: list = field(default_factory=list, repr=False)
    draws: ChiSqDraws | None = field(default=None, repr=False)

    @property
    def h(self):
        return self.subset.h

    @property
    def robust_eigvals(self):
        return self.eig.robust_eigvals

    def robust_covariance(self):
        """``k * C_H`` in kernel units."""
        return self.k * self.eig.covariance()

    @property
    def location(self):
        return self.eig.mean


# --------------------------------------------------------------------------
# spectral building blocks


def _trimmed_cov(sample, H: SubsetH):
    return sample.trimmed_cov(H)


def _dual_eigh(sample, H: SubsetH):
    """Spectrum of the trimmed covariance from the h x h Gram matrix (cheaper when d > h)."""
    rows = sample.data[list(H.indices)]
    xc = rows - rows.mean(axis=0)
    gram = xc @ xc.T / H.h
    mu, v = np.linalg.eigh(0.5 * (gram + gram.T))
    pos = mu > 0
    mu, v = mu[pos], v[:, pos]
    vecs = xc.T @ v / np.sqrt(H.h * mu)
    return mu, vecs


def eigensystem(sample, H: SubsetH, rank_tol: float = 1e-12) -> EigenSystem:
    H.check(sample.n)
    if sample.data.shape[1] > H.h:
        vals, vecs = _dual_eigh(sample, H)
    else:
        vals, vecs = np.linalg.eigh(_trimmed_cov(sample, H))
    vals = vals[::-1] * sample.weight
    vecs = vecs[:, ::-1]
    top = vals[0] if vals.size else 0.0
    if not top > 0:
        raise DegenerateSubsetError(f"subset of size {H.h} has zero variance")
    keep = min(int(np.count_nonzero(vals > rank_tol * top)), H.h - 1, vals.size)
    if keep < 1:
        raise DegenerateSubsetError(f"subset of size {H.h} has zero variance")
    mean = sample.data[list(H.indices)].mean(axis=0)
    return EigenSystem(vals[:keep].copy(), vecs[:, :keep].copy(), mean, H, float(sample.weight))


def _projections(sample, eig: EigenSystem):
    """Squared L2 projections <psi_j, x_i - mean>^2, shape n x rank."""
    scores = (sample.data - eig.mean) @ eig.eigvecs
    return eig.weight * scores * scores


def _weights(eigvals, a):
    return eigvals / (eigvals + a) ** 2


def standardized_distances(sample, eig: EigenSystem, a: float) -> np.ndarray:
    """Squared alpha-Mahalanobis distances of every curve at regularization ``a``."""
    if not a > 0:
        raise DomainError("regularization must be positive")
    return _projections(sample, eig) @ _weights(eig.eigvals, a)


def limit_weights(eigvals, a):
    """Weights ``lambda^2 / (lambda + a)^2`` of the Gaussian limit law."""
    eigvals = np.asarray(eigvals, dtype=float)
    return eigvals**2 / (eigvals + a) ** 2


def solve_k(sample, eig: EigenSystem, alpha: float, draws: ChiSqDraws, cfg: MrctConfig, proj=None) -> KSolve:
    """Consistency factor by fixed-point iteration on the median-matching equation.

    ``draws`` is held fixed over the whole loop, which makes the update a
    deterministic map of ``k``.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if proj is None:
        proj = _projections(sample, eig)
    lam = eig.eigvals
    k1 = 1.0
    history = []
    best = None
    for it in range(1, cfg.max_k_iters + 1):
        k0 = k1
        a = alpha / k0
        d2 = proj @ _weights(lam, a)
        denom = wchisq_median(limit_weights(lam, a), draws)
        k1 = float(np.median(d2)) / denom if denom > 0 else float("nan")
        history.append(k1)
        if not (math.isfinite(k1) and k1 > 0):
            raise ConvergenceError(f"consistency factor became {k1!r}", history)
        step = (k1 - k0) ** 2
        if best is None or step < best[0]:
            best = (step, k1, d2, it)
        if step < cfg.eps_k:
            return KSolve(k1, d2, it, True)
    _, k1, d2, it = best
    log.debug("k-iteration did not converge after %d steps (last %r)", cfg.max_k_iters, history[-3:])
    return KSolve(k1, d2, it, False)


def _order(d):
    # stable sort -> ties go to the lower index
    return np.argsort(d, kind="stable")


def c_step(sample, H0: SubsetH, alpha: float, cfg: MrctConfig, draws: ChiSqDraws) -> CStep:
    """One concentration step: estimates from ``H0``, keep the ``h`` most central curves."""
    eig = eigensystem(sample, H0, cfg.rank_tol)
    ks = solve_k(sample, eig, alpha, draws, cfg)
    robust = ks.distances / ks.k
    H1 = SubsetH.of(_order(robust)[: H0.h])
    objective = float(np.mean(robust[list(H0.indices)]))
    return CStep(H1, ks.k, robust, dataclasses.replace(eig, k=ks.k), objective, ks.converged)


def cutoff(eig_final: EigenSystem, alpha: float, q: float, seed: int, N: int = 2000) -> float:
    """``q``-quantile of the Gaussian limit law of the robust squared distances."""
    draws = draw_chisq(N, eig_final.rank, seed, "cutoff")
    return wchisq_quantile(limit_weights(eig_final.robust_eigvals, alpha), q, draws)


def flag_outliers(distances, cut: float) -> np.ndarray:
    return np.asarray(distances, dtype=float) > cut


# --------------------------------------------------------------------------
# multi-start orchestration


def median_start(sample, h: int) -> SubsetH:
    """The ``h`` curves closest in L2 to the pointwise median curve."""
    med = np.median(sample.data, axis=0)
    diff = sample.data - med
    dist = sample.weight * np.einsum("ij,ij->i", diff, diff)
    return SubsetH.of(_order(dist)[:h])


def random_start(n: int, h: int, seed: int, chain: int) -> SubsetH:
    rng = substream(seed, "starts", chain)
    return SubsetH.of(rng.choice(n, size=h, replace=False))


def kmedian_draws(sample, h: int, cfg: MrctConfig) -> ChiSqDraws:
    r = max(1, min(h - 1, sample.data.shape[1]))
    return draw_chisq(cfg.mc_N, r, cfg.seed, "kmedian")


class _Stepper:
    """Memoized concentration map for one (sample, alpha, draws) triple."""

    def __init__(self, sample, alpha, cfg, draws):
        self.sample, self.alpha, self.cfg, self.draws = sample, alpha, cfg, draws
        self.cache = {}

    def __call__(self, H: SubsetH) -> CStep:
        step = self.cache.get(H.indices)
        if step is None:
            step = c_step(self.sample, H, self.alpha, self.cfg, self.draws)
            self.cache[H.indices] = step
        return step


def run_chain(step_fn, start: SubsetH, max_outer_iters: int) -> ChainResult:
    """Iterate C-steps until a subset repeats (fixed point or cycle) or the budget runs out."""
    H = start
    seen = {}
    trail = []
    for it in range(1, max_outer_iters + 1):
        step = step_fn(H)
        seen[H.indices] = len(trail)
        trail.append((H, step))
        if step.subset == H:
            return ChainResult(start, H, step, it, fixed_point=True)
        if step.subset.indices in seen:
            loop = trail[seen[step.subset.indices]:]
            Hc, sc = min(loop, key=lambda hs: (hs[1].objective, hs[0].indices))
            return ChainResult(start, Hc, sc, it, fixed_point=False, cycled=True)
        H = step.subset
    Hc, sc = trail[-1]
    return ChainResult(start, Hc, sc, max_outer_iters, fixed_point=False)


def selection_score(chain: ChainResult, cfg: MrctConfig) -> float:
    """Smaller is better."""
    d = chain.step.distances
    members = d[list(chain.subset.indices)]
    if cfg.selection == "trace":
        return float(members.mean())
    if cfg.selection == "trace_q":
        m = max(1, math.ceil(cfg.selection_q * members.size))
        return float(np.sort(members)[:m].mean())
    return -excess_kurtosis_sq(d)


def mrct_fit(sample, cfg: MrctConfig, alpha: float | None = None) -> MrctResult:
    """Fit the estimator at a fixed ``alpha`` (``cfg.alpha`` unless overridden)."""
    alpha = cfg.alpha if alpha is None else alpha
    if alpha == "auto":
        raise DomainError("mrct_fit needs a numeric alpha; use alpha_select.fit_auto for 'auto'")
    alpha = float(alpha)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    n = sample.n
    h = cfg.resolve_h(n)
    draws = kmedian_draws(sample, h, cfg)
    stepper = _Stepper(sample, alpha, cfg, draws)

    starts = []
    if cfg.median_start:
        starts.append(median_start(sample, h))
    starts.extend(random_start(n, h, cfg.seed, i) for i in range(cfg.n_starts))

    chains, failures = [], []
    for start in starts:
        try:
            chains.append(run_chain(stepper, start, cfg.max_outer_iters))
        except NumericalError as exc:
            failures.append(exc)
    if not chains:
        raise EstimationError(f"all {len(starts)} chains failed; first error: {failures[0]}")

    fixed = [c for c in chains if c.fixed_point]
    pool = fixed or chains
    scored = [(selection_score(c, cfg), c.subset.indices, c) for c in pool]
    score, _, best = min(scored, key=lambda t: (t[0], t[1]))
    step = best.step
    cut = cutoff(step.eig, alpha, cfg.cutoff_q, cfg.seed, cfg.mc_N)
    return MrctResult(
        subset=best.subset,
        alpha=alpha,
        k=step.k,
        distances=step.distances,
        cutoff=cut,
        flags=flag_outliers(step.distances, cut),
        trace_objective=step.objective,
        n_outer_iters=best.n_iter,
        n_starts_converged=len(fixed),
        converged=bool(fixed),
        eig=step.eig,
        config=cfg,
        k_converged=step.k_converged,
        selection_score=score,
        chains=chains,
        draws=draws,
    )

"""Data-driven choice of the regularization parameter and the subset-size scan.

For a robust spectrum ``k * lambda_j`` the standardized eigenvalues
``x^2 / (x + alpha)^2`` are split into a leading "signal" cluster with a free
center and a trailing "noise" cluster centered at zero.  ``g(alpha)`` is the
resulting within-cluster sum of squares divided by the squared signal center;
alpha is moved to the grid minimizer of ``g`` and the fit is repeated until the
choice stabilizes.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .core import MrctConfig, MrctResult, mrct_fit
from .errors import DomainError, MrctError

DEFAULT_GRID = np.logspace(-3, 2, 30)


@dataclass
class AlphaSelectionTrace:
    grid: np.ndarray
    g_values: np.ndarray
    m_alpha: np.ndarray
    chosen_alpha: float
    history: list = field(default_factory=list)
    converged: bool = False
    alpha0: float = float("nan")

    @property
    def chosen_index(self):
        return int(np.flatnonzero(self.grid == self.chosen_alpha)[0])


@dataclass
class HScanTrace:
    h_values: np.ndarray
    objective: np.ndarray
    cov_shift: np.ndarray
    results: list = field(default_factory=list, repr=False)


class AlphaSelectionError(MrctError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def standardized_eigvals(eigvals_robust, alpha: float) -> np.ndarray:
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    x = np.asarray(eigvals_robust, dtype=float)
    return x**2 / (x + alpha) ** 2


def partition_objective(lst) -> tuple[int, float]:
    """Split ``m`` minimizing the joint within-cluster sum of squares, and ``g``.

    ``m`` (1-based size of the signal cluster) minimizes the raw sum; ``g`` is
    that sum divided by the squared signal center at ``m``.
    """
    x = np.asarray(lst, dtype=float)
    if x.size == 0:
        raise DomainError("empty eigenvalue list")
    m = np.arange(1, x.size + 1)
    s1 = np.cumsum(x)
    s2 = np.cumsum(x * x)
    centre = s1 / m
    if not centre[0] > 0:
        raise DomainError("objective undefined: all standardized eigenvalues are zero")
    within = s2 - s1 * centre  # sum (x_i - c)^2 over the first m
    tail = s2[-1] - s2  # sum x_i^2 over the rest
    wss = np.maximum(within, 0.0) + tail
    i = int(np.argmin(wss))
    return i + 1, float(wss[i] / centre[i] ** 2)


def objective_curve(eigvals_robust, grid):
    g = np.empty(len(grid))
    m = np.empty(len(grid), dtype=int)
    for j, a in enumerate(grid):
        m[j], g[j] = partition_objective(standardized_eigvals(eigvals_robust, a))
    return g, m


def default_alpha0(sample):
    return 0.01 if sample.data.shape[1] < sample.n else 1.0


def select_alpha(sample, grid=None, alpha0=None, cfg: MrctConfig | None = None, max_iter: int = 20):
    """Iterate fit -> grid argmin of ``g`` until the chosen alpha repeats.

    Returns ``(trace, fit)`` where ``fit`` is the estimator run at the chosen alpha.
    """
    cfg = cfg or MrctConfig()
    grid = np.asarray(DEFAULT_GRID if grid is None else grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("alpha grid must be non-empty, positive and strictly ascending")
    alpha0 = default_alpha0(sample) if alpha0 is None else float(alpha0)
    if not alpha0 > 0:
        raise DomainError("alpha0 must be positive")

    fits = {}

    def fit(a):
        if a not in fits:
            fits[a] = mrct_fit(sample, cfg, alpha=a)
        return fits[a]

    trace = AlphaSelectionTrace(grid, np.full(grid.size, np.nan), np.zeros(grid.size, int), float("nan"), alpha0=alpha0)
    current = alpha0
    own_g = {}  # grid index -> g evaluated on the fit at that same alpha
    for _ in range(max_iter):
        try:
            res = fit(current)
        except MrctError as exc:
            raise AlphaSelectionError(f"fit at alpha={current:g} failed: {exc}", trace) from exc
        g, m = objective_curve(res.robust_eigvals, grid)
        i = int(np.argmin(g))
        trace.g_values, trace.m_alpha = g, m
        trace.history.append(i)
        on_grid = np.flatnonzero(grid == current)
        if on_grid.size:
            own_g[int(on_grid[0])] = g[on_grid[0]]
        if grid[i] == current:
            trace.chosen_alpha, trace.converged = float(current), True
            return trace, res
        if i in own_g:
            break  # cycle
        current = float(grid[i])
    if not own_g:
        own_g[i] = np.inf
    best = min(own_g, key=lambda j: (own_g[j], j))
    trace.chosen_alpha = float(grid[best])
    return trace, _final(trace, fit, grid)


def _final(trace, fit, grid):
    res = fit(trace.chosen_alpha)
    trace.g_values, trace.m_alpha = objective_curve(res.robust_eigvals, grid)
    return res


def fit_auto(sample, cfg: MrctConfig, **kwargs) -> tuple[MrctResult, AlphaSelectionTrace | None]:
    """Fit at ``cfg.alpha``, running the alpha selection first when it is ``"auto"``."""
    if cfg.alpha == "auto":
        trace, res = select_alpha(sample, cfg=cfg, **kwargs)
        return res, trace
    return mrct_fit(sample, cfg), None


def h_scan(sample, alpha: float, h_values, cfg: MrctConfig | None = None) -> HScanTrace:
    """Full fit for every ``h``; record the trace objective and covariance shifts."""
    cfg = cfg or MrctConfig()
    hs = np.asarray(sorted(int(h) for h in h_values), dtype=int)
    lo = -(-sample.n // 2)
    if hs.size == 0 or hs[0] < lo or hs[-1] > sample.n:
        raise DomainError(f"h values must lie in [{lo}, {sample.n}]")
    objective = np.empty(hs.size)
    covs, results = [], []
    for j, h in enumerate(hs):
        res = mrct_fit(sample, dataclasses.replace(cfg, h=int(h)), alpha=alpha)
        objective[j] = res.trace_objective
        covs.append(res.robust_covariance())
        results.append(res)
    shift = np.array([np.linalg.norm(b - a) for a, b in zip(covs, covs[1:])])
    return HScanTrace(hs, objective, shift, results)

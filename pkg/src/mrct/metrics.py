"""Evaluation metrics: confusion rates, rate-based F-score, ISE, subset overlap, kurtosis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class ConfusionRates:
    """Rates are ``None`` when the class they are conditioned on is empty."""

    tpr: float | None
    fpr: float | None
    fnr: float | None
    tnr: float | None

    def as_dict(self):
        return {"tpr": self.tpr, "fpr": self.fpr, "fnr": self.fnr, "tnr": self.tnr}


def confusion_rates(flags, labels) -> ConfusionRates:
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if flags.shape != labels.shape:
        raise DimensionError(f"flags {flags.shape} and labels {labels.shape} differ in shape")
    n_out = int(labels.sum())
    n_reg = int((~labels).sum())
    tpr = fnr = fpr = tnr = None
    if n_out:
        tpr = int((flags & labels).sum()) / n_out
        fnr = 1.0 - tpr
    if n_reg:
        fpr = int((flags & ~labels).sum()) / n_reg
        tnr = 1.0 - fpr
    return ConfusionRates(tpr, fpr, fnr, tnr)


def f_score(r: ConfusionRates) -> float:
    """``TPR / (TPR + (FPR + FNR) / 2)``, computed on rates rather than counts."""
    if r.tpr is None or r.fpr is None:
        raise DomainError("F-score needs both outliers and regular observations")
    denom = r.tpr + 0.5 * (r.fpr + r.fnr)
    if denom == 0:
        return 0.0
    return r.tpr / denom


def ise(true_kernel, est_kernel) -> float:
    a = np.asarray(true_kernel, dtype=float)
    b = np.asarray(est_kernel, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"kernel shapes {a.shape} and {b.shape} differ")
    return float(np.mean((a - b) ** 2))


def sample_cov(values, mask=None):
    """Plain ``1/m`` sample covariance of the selected rows."""
    x = np.asarray(values, dtype=float)
    if mask is not None:
        x = x[np.asarray(mask, dtype=bool)]
    c = x - x.mean(axis=0)
    return c.T @ c / x.shape[0]


def subset_overlap(subsets, h_opt) -> tuple[float, float]:
    """Mean overlap with ``h_opt`` (O1) and size of the common intersection (O2), both over h."""
    subsets = list(subsets)
    if not subsets:
        raise DomainError("no subsets given")
    h = len(h_opt)
    if any(len(s) != h for s in subsets):
        raise DimensionError("all subsets must have the same size as h_opt")
    ref = set(h_opt)
    o1 = float(np.mean([len(ref.intersection(s)) / h for s in subsets]))
    common = set(subsets[0])
    for s in subsets[1:]:
        common.intersection_update(s)
    return o1, len(common) / h


def excess_kurtosis_sq(values) -> float:
    """Squared excess kurtosis ``(m4 / m2^2 - 3)^2`` from central sample moments."""
    v = np.asarray(values, dtype=float)
    if v.size < 4:
        raise DomainError("need at least four values")
    c = v - v.mean()
    m2 = np.mean(c * c)
    if not m2 > 0:
        raise DomainError("zero variance")
    m4 = np.mean(c**4)
    return float((m4 / m2**2 - 3.0) ** 2)

"""Classification metrics, ROC/AUC and the paired Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from . import _kernels
from .errors import AllZeroDifferences, SingleClassTruth

EXACT_MAX_N = 25

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.shape[0]} scores for {y.shape[0]} labels")
    if y.all() or not y.any():
        raise SingleClassTruth("ROC needs both classes in the ground truth")
    return s, y


def auc_fast(scores, labels) -> float:
    """AUC as the Mann-Whitney rank statistic; tied pairs count one half.

    Works with doubled mid-ranks so the numerator is an exact integer and the
    result matches the pairwise definition bit for bit.
    """
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    r2 = np.rint(2.0 * rankdata(s, method="average")).astype(np.int64)
    u2 = int(r2[y].sum()) - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float


def roc_curve(scores, labels) -> RocCurve:
    """ROC points at every distinct score, starting from (0, 0)."""
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    tpr = np.r_[0.0, tps / y.sum()]
    fpr = np.r_[0.0, fps / (~y).sum()]
    thr = np.r_[np.inf, s[distinct]]
    return RocCurve(thr, tpr, fpr, float(_trapezoid(tpr, fpr)))


def metrics(scores, labels_true, threshold: float = 0.5, predicted=None) -> dict:
    """Accuracy and F1 (attended = positive class) plus the ROC curve.

    Hard decisions are ``predicted`` when given, else ``scores > threshold``.
    ``roc`` is None when the truth holds a single class.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels_true, dtype=bool).ravel()
    pred = (s > threshold) if predicted is None else np.asarray(predicted, dtype=bool).ravel()
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    acc = float(np.mean(pred == y))
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 0.0
    try:
        roc = roc_curve(s, y)
    except SingleClassTruth:
        roc = None
    return {"accuracy": acc, "f1": float(f1), "roc": roc,
            "auc": None if roc is None else auc_fast(s, y)}


def permutation_null_band(scores, labels, n_perm: int = 1000, level: float = 0.95,
                          seed: int = 0):
    """Central ``level`` band of AUC under random relabelling."""
    s, y = _check_binary(scores, labels)
    rng = np.random.default_rng(seed)
    vals = np.array([auc_fast(s, rng.permutation(y)) for _ in range(n_perm)])
    a = (1.0 - level) / 2.0
    return float(np.quantile(vals, a)), float(np.quantile(vals, 1.0 - a))


def wilcoxon_signed_rank(a, b, strict: bool = False) -> float:
    """Two-sided paired Wilcoxon signed-rank p-value.

    Zero differences are discarded. Up to 25 non-zero pairs the p-value comes
    from the exact null distribution of the positive rank sum (mid-ranks for
    ties); above that from the tie-corrected normal approximation. When every
    difference is zero the samples are indistinguishable and p = 1, unless
    ``strict`` asks for AllZeroDifferences instead.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    if a.size < 5:
        raise ValueError("need at least 5 pairs")
    d = a - b
    d = d[d != 0]
    if d.size == 0:
        if strict:
            raise AllZeroDifferences("all paired differences are zero")
        return 1.0
    n = d.size
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2.0
    if n <= EXACT_MAX_N:
        r2 = np.rint(2 * ranks).astype(np.int64)
        counts = _kernels.signed_rank_counts(r2)
        k = int(round(2 * w_plus))
        tail = min(counts[:k + 1].sum(), counts[k:].sum())
        return float(min(1.0, 2.0 * tail / counts.sum()))
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
    z = (w_plus - total / 2.0) / math.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(abs(z))))

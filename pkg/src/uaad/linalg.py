"""Covariance accumulation and the symmetric-definite generalized eigensolver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, solve_triangular

from .errors import (ConvergenceFailure, NoPositiveMass, NotPositiveDefinite,
                     ShapeMismatch)

MODES = ("normal", "discriminative")


class CovarianceAccumulator:
    """Running sums behind R_xx, R_ss and the label-weighted cross terms.

    ``sum_xx`` and ``sum_ss`` take every segment regardless of its label; the
    cross-correlation is split into a part weighted by p(n) and a part weighted
    by 1 - p(n). All updates are in place; :func:`accumulate` is the copying
    variant.
    """

    def __init__(self, dim_x: int, dim_s: int):
        self.dim_x = int(dim_x)
        self.dim_s = int(dim_s)
        self.sum_xx = np.zeros((dim_x, dim_x))
        self.sum_ss = np.zeros((dim_s, dim_s))
        self.sum_xs_pos = np.zeros((dim_x, dim_s))
        self.sum_xs_neg = np.zeros((dim_x, dim_s))
        self.weight_pos = 0.0
        self.weight_neg = 0.0
        self.n_segments = 0.0

    def copy(self) -> "CovarianceAccumulator":
        out = CovarianceAccumulator(self.dim_x, self.dim_s)
        out.sum_xx = self.sum_xx.copy()
        out.sum_ss = self.sum_ss.copy()
        out.sum_xs_pos = self.sum_xs_pos.copy()
        out.sum_xs_neg = self.sum_xs_neg.copy()
        out.weight_pos = self.weight_pos
        out.weight_neg = self.weight_neg
        out.n_segments = self.n_segments
        return out

    def add_products(self, xx, ss, xs, p: float) -> "CovarianceAccumulator":
        """Add one segment given its precomputed X X^T, S S^T and X S^T."""
        p = float(p)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"label weight {p} outside [0, 1]")
        if np.shape(xs) != (self.dim_x, self.dim_s):
            raise ShapeMismatch(
                f"cross product {np.shape(xs)} does not match ({self.dim_x}, {self.dim_s})")
        if xx is not None:
            self.sum_xx += xx
        self.sum_ss += ss
        self.sum_xs_pos += p * xs
        self.sum_xs_neg += (1.0 - p) * xs
        self.weight_pos += p
        self.weight_neg += 1.0 - p
        self.n_segments += 1.0
        return self

    def add(self, X, S, p: float) -> "CovarianceAccumulator":
        X = np.asarray(X, dtype=np.float64)
        S = np.asarray(S, dtype=np.float64)
        if X.ndim != 2 or S.ndim != 2 or X.shape[0] != self.dim_x or S.shape[0] != self.dim_s \
                or X.shape[1] != S.shape[1]:
            raise ShapeMismatch(
                f"segment shapes {X.shape}, {S.shape} do not match accumulator "
                f"({self.dim_x}, {self.dim_s})")
        return self.add_products(X @ X.T, S @ S.T, X @ S.T, p)

    def merge(self, other: "CovarianceAccumulator") -> "CovarianceAccumulator":
        if (other.dim_x, other.dim_s) != (self.dim_x, self.dim_s):
            raise ShapeMismatch("cannot merge accumulators of different shapes")
        self.sum_xx += other.sum_xx
        self.sum_ss += other.sum_ss
        self.sum_xs_pos += other.sum_xs_pos
        self.sum_xs_neg += other.sum_xs_neg
        self.weight_pos += other.weight_pos
        self.weight_neg += other.weight_neg
        self.n_segments += other.n_segments
        return self

    def decay(self, alpha: float) -> "CovarianceAccumulator":
        """Scale every statistic by the forgetting factor (X' = alpha X)."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("forgetting factor must be in [0, 1]")
        if alpha == 1.0:
            return self
        for name in ("sum_xx", "sum_ss", "sum_xs_pos", "sum_xs_neg"):
            getattr(self, name)[...] *= alpha
        self.weight_pos *= alpha
        self.weight_neg *= alpha
        self.n_segments *= alpha
        return self


def accumulate(acc: CovarianceAccumulator, X, S, p: float) -> CovarianceAccumulator:
    return acc.copy().add(X, S, p)


def _ridged(mat, ridge):
    mat = 0.5 * (mat + mat.T)
    if ridge > 0:
        mat = mat + ridge * np.mean(np.diag(mat)) * np.eye(mat.shape[0])
    return mat


def finalize(acc: CovarianceAccumulator, mode: str = "normal", ridge: float = 1e-6):
    """Turn accumulated sums into (R_xx, R_ss, R_xs).

    R_xx and R_ss are averaged over all segments and ridged by
    ``ridge * mean(diag)``. The cross term is normalised by the positive label
    mass in both modes; the discriminative mode subtracts the (1 - p) weighted
    part before normalising.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if acc.n_segments <= 0:
        raise NoPositiveMass("accumulator is empty")
    if not acc.weight_pos > 1e-12:
        raise NoPositiveMass("no segment carries positive label mass")
    R_xx = _ridged(acc.sum_xx / acc.n_segments, ridge)
    R_ss = _ridged(acc.sum_ss / acc.n_segments, ridge)
    if mode == "normal":
        R_xs = acc.sum_xs_pos / acc.weight_pos
    else:
        if not acc.weight_neg > 1e-12:
            raise NoPositiveMass("discriminative mode needs mass on both classes")
        R_xs = (acc.sum_xs_pos - acc.sum_xs_neg) / acc.weight_pos
    return R_xx, R_ss, R_xs


@dataclass(frozen=True)
class GevdResult:
    eigenvalues: np.ndarray
    left_vectors: np.ndarray
    right_vectors: Optional[np.ndarray] = None


def gevd_topk(A, B, K: int):
    """Top-K eigenpairs of A v = lambda B v for symmetric A and SPD B.

    Reduces to a standard symmetric problem with the Cholesky factor
    B = L L^T, solves it with ``numpy.linalg.eigh`` and maps the eigenvectors
    back with L^-T, so the returned columns are B-orthonormal. Eigenvalues come
    out non-increasing.

    Returns:
        (eigenvalues, vectors) with shapes (K,) and (n, K).
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise ShapeMismatch(f"A {A.shape} and B {B.shape} must be square and equal")
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must be in [1, {n}]")
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    try:
        L, _ = cho_factor(B, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Cholesky factorisation failed: {exc}") from exc
    L = np.tril(L)
    # M = L^-1 A L^-T
    tmp = solve_triangular(L, A, lower=True)
    M = solve_triangular(L, tmp.T, lower=True)
    M = 0.5 * (M + M.T)
    try:
        w, U = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(-w, kind="stable")[:K]
    V = solve_triangular(L, U[:, order], lower=True, trans="T")
    return w[order], V


class WindowStats:
    """Per-window cross products reused across self-training iterations.

    ``xs[n] = X_n S_n^T`` and ``ss[n] = S_n S_n^T`` are kept per window (they are
    small); only the sum of ``X_n X_n^T`` is kept because the per-window EEG
    autocorrelations are large.
    """

    def __init__(self, xs, ss, xx_sum):
        self.xs = xs
        self.ss = ss
        self.xx_sum = xx_sum

    @property
    def N(self) -> int:
        return self.xs.shape[0]

    @classmethod
    def from_segments(cls, segs, with_xx: bool = True) -> "WindowStats":
        N = segs.N
        xs = np.empty((N, segs.dim_x, segs.dim_s))
        ss = np.empty((N, segs.dim_s, segs.dim_s))
        xx = np.zeros((segs.dim_x, segs.dim_x)) if with_xx else None
        for n in range(N):
            X = segs.X[n]
            S = segs.S[n]
            xs[n] = X @ S.T
            ss[n] = S @ S.T
            if with_xx:
                xx += X @ X.T
        return cls(xs, ss, xx)

    def subset(self, idx) -> "WindowStats":
        # the EEG autocorrelation sum is not decomposable; recomputed on demand
        return WindowStats(self.xs[idx], self.ss[idx], None)

    def accumulator(self, p, xx_sum=None, idx=None) -> CovarianceAccumulator:
        """Accumulator over (a subset of) the windows with soft labels ``p``."""
        xs, ss = self.xs, self.ss
        if idx is not None:
            xs, ss = xs[idx], ss[idx]
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (xs.shape[0],):
            raise ShapeMismatch(f"{p.shape[0]} labels for {xs.shape[0]} windows")
        if np.any(p < 0) or np.any(p > 1):
            raise ValueError("label weights must be in [0, 1]")
        acc = CovarianceAccumulator(xs.shape[1], xs.shape[2])
        acc.sum_xx = (self.xx_sum if xx_sum is None else xx_sum).copy()
        acc.sum_ss = ss.sum(axis=0)
        acc.sum_xs_pos = np.tensordot(p, xs, axes=1)
        acc.sum_xs_neg = np.tensordot(1.0 - p, xs, axes=1)
        acc.weight_pos = float(p.sum())
        acc.weight_neg = float((1.0 - p).sum())
        acc.n_segments = float(len(p))
        return acc


def grouped_xx(segs, groups, n_groups: int) -> np.ndarray:
    """Sum of X_n X_n^T per group label, shape (n_groups, D, D)."""
    D = segs.dim_x
    out = np.zeros((n_groups, D, D))
    for n in range(segs.N):
        X = segs.X[n]
        out[groups[n]] += X @ X.T
    return out

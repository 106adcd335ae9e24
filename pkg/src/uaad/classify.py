"""Fisher LDA, minimally informed LDA (MILDA), sigmoid soft labels and GMM thresholding."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .core_io import LabelVector
from .errors import Collapse, ConvergenceFailure, DegenerateCovariance, SingleClass, ZeroSpread

RIDGE_REL = 1e-8


def _as_features(features) -> np.ndarray:
    F = np.asarray(features, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    return F


def _ridge_eye(M, rel=RIDGE_REL):
    K = M.shape[0]
    return rel * max(np.trace(M), 0.0) / K * np.eye(K)


@dataclass(frozen=True)
class LdaState:
    mu_pos: np.ndarray
    mu_neg: np.ndarray
    cov_pos: np.ndarray
    cov_neg: np.ndarray
    w: np.ndarray
    threshold: float

    def scores(self, features) -> np.ndarray:
        return _as_features(features) @ self.w

    def predict(self, features) -> np.ndarray:
        return self.scores(features) > self.threshold


def fit_lda(features, labels_hard, ridge: float = RIDGE_REL) -> LdaState:
    """Two-class Fisher LDA, w = (S_+ + S_-)^-1 (mu_+ - mu_-)."""
    F = _as_features(features)
    lab = np.asarray(labels_hard, dtype=bool).ravel()
    if lab.shape[0] != F.shape[0]:
        raise ValueError("one label per feature vector required")
    if lab.all() or not lab.any():
        raise SingleClass("LDA needs both classes present")
    pos, neg = F[lab], F[~lab]
    mu_p, mu_n = pos.mean(0), neg.mean(0)
    cov_p = np.atleast_2d(np.cov(pos, rowvar=False, bias=True))
    cov_n = np.atleast_2d(np.cov(neg, rowvar=False, bias=True))
    Sw = cov_p + cov_n
    w = np.linalg.solve(Sw + _ridge_eye(Sw, ridge), mu_p - mu_n)
    return LdaState(mu_p, mu_n, cov_p, cov_n, w, float(w @ (mu_p + mu_n) / 2.0))


@dataclass(frozen=True)
class MildaState:
    """Label-free LDA projection.

    The leading eigenvector ``delta`` of the global feature covariance stands in
    for the (unknown) class-mean difference. Shifting the features to
    rho - mean + delta makes the class means proportional, and the LDA-equivalent
    projection is then w = cov^-1 delta.
    """

    mean: np.ndarray
    cov: np.ndarray
    delta: np.ndarray
    w: np.ndarray

    def scores(self, features) -> np.ndarray:
        return _as_features(features) @ self.w

    def transform(self, features) -> np.ndarray:
        return _as_features(features) - self.mean + self.delta


def _orient(F, delta, w):
    """Sign so that windows in the top decile of rho_1 score above average."""
    y = F @ w
    top = F[:, 0] >= np.quantile(F[:, 0], 0.9)
    gap = y[top].mean() - y.mean()
    if gap < 0 or (gap == 0 and delta.sum() < 0):
        return -delta, -w
    return delta, w


def milda_from_moments(mean, cov, ridge: float = RIDGE_REL, orient_features=None) -> MildaState:
    """MILDA from a global mean and covariance (used by the streaming decoder)."""
    cov = 0.5 * (cov + cov.T)
    if not np.trace(cov) > 1e-300:
        raise DegenerateCovariance("feature covariance is zero")
    evals, evecs = np.linalg.eigh(cov)
    delta = evecs[:, -1] * np.sqrt(max(evals[-1], 0.0))
    w = np.linalg.solve(cov + _ridge_eye(cov, ridge), delta)
    if orient_features is not None:
        delta, w = _orient(orient_features, delta, w)
    elif delta.sum() < 0:
        delta, w = -delta, -w
    return MildaState(np.asarray(mean, dtype=np.float64), cov, delta, w)


def fit_milda(features, ridge: float = RIDGE_REL) -> MildaState:
    F = _as_features(features)
    N, K = F.shape
    if N < K + 1:
        raise DegenerateCovariance(f"need at least K+1={K + 1} feature vectors, got {N}")
    mean = F.mean(0)
    cov = np.atleast_2d(np.cov(F, rowvar=False, bias=True))
    return milda_from_moments(mean, cov, ridge, orient_features=F)


@dataclass(frozen=True)
class ScoreVector:
    y: np.ndarray
    mean: float
    std: float

    @classmethod
    def of(cls, y) -> "ScoreVector":
        y = np.asarray(y, dtype=np.float64).ravel()
        return cls(y, float(y.mean()), float(y.std()))


def soft_labels(scores) -> LabelVector:
    """p(n) = 1 / (1 + exp(-(y(n) - mean) / std))."""
    sv = scores if isinstance(scores, ScoreVector) else ScoreVector.of(scores)
    if not sv.std > 0:
        raise ZeroSpread("all scores are equal; soft labels undefined")
    return LabelVector(expit((sv.y - sv.mean) / sv.std))


@dataclass(frozen=True)
class GmmState:
    """Two-component 1-D Gaussian mixture, attended component has the larger mean.

    ``sigma`` is the shared standard deviation; with ``tied=False`` the
    per-component values live in ``sigma_pos``/``sigma_neg``.
    """

    mu_pos: float
    mu_neg: float
    sigma: float
    q: float
    sigma_pos: float = None
    sigma_neg: float = None
    tied: bool = True
    loglik: np.ndarray = field(default=None, repr=False)
    n_iter: int = 0
    restarts: int = 0

    def __post_init__(self):
        if self.sigma_pos is None:
            object.__setattr__(self, "sigma_pos", self.sigma)
        if self.sigma_neg is None:
            object.__setattr__(self, "sigma_neg", self.sigma)

    @property
    def threshold(self) -> float:
        return 0.5 * (self.mu_pos + self.mu_neg)

    def log_densities(self, y):
        y = np.asarray(y, dtype=np.float64)
        lp = -np.log(self.sigma_pos) - 0.5 * ((y - self.mu_pos) / self.sigma_pos) ** 2
        ln = -np.log(self.sigma_neg) - 0.5 * ((y - self.mu_neg) / self.sigma_neg) ** 2
        return lp, ln

    def posterior(self, y) -> np.ndarray:
        """P(attended | y) including the mixture weight."""
        lp, ln = self.log_densities(y)
        return expit(lp - ln + np.log(self.q) - np.log1p(-self.q))


def fit_gmm(scores, tied: bool = True, tol: float = 1e-8, max_iter: int = 500,
            max_restarts: int = 5, seed: int = 0) -> GmmState:
    """EM fit of a two-component 1-D mixture.

    Starts from the 25th/75th percentiles with sigma = IQR / 2 and q = 0.5.
    If a component collapses the fit restarts from jittered means, up to
    ``max_restarts`` times. The observed-data log-likelihood is checked to be
    non-decreasing at every iteration.
    """
    y = scores.y if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=np.float64).ravel()
    if y.shape[0] < 4:
        raise ValueError("GMM fit needs at least 4 scores")
    spread = float(y.std())
    if not spread > 0:
        raise Collapse("all scores identical; mixture components collapse")
    sd_floor = 1e-6 * spread
    lo, hi = np.percentile(y, [25, 75])
    sd = (hi - lo) / 2.0
    if not sd > sd_floor:
        sd = spread
    rng = np.random.default_rng(seed)
    mu_lo, mu_hi = lo, hi
    for attempt in range(max_restarts + 1):
        res = _kernels.em_two_gauss(y, mu_lo, mu_hi, sd, sd, 0.5, tied, tol, max_iter, sd_floor)
        m_lo, m_hi, s_lo, s_hi, q, trace, status = res
        if status != _kernels.EM_COLLAPSE:
            break
        mu_lo, mu_hi = np.sort(rng.choice(y, 2, replace=False) + rng.normal(0, 0.1 * spread, 2))
        if mu_lo == mu_hi:
            mu_hi = mu_lo + spread
        sd = spread
    else:
        raise Collapse(f"mixture collapsed after {max_restarts} restarts")
    steps = np.diff(trace)
    if np.any(steps < -1e-9 * (np.abs(trace[1:]) + 1.0)):
        raise ConvergenceFailure("EM log-likelihood decreased")
    if m_hi < m_lo:
        m_lo, m_hi, s_lo, s_hi, q = m_hi, m_lo, s_hi, s_lo, 1.0 - q
    sigma = s_hi if tied else float(np.sqrt(q * s_hi ** 2 + (1 - q) * s_lo ** 2))
    return GmmState(float(m_hi), float(m_lo), float(sigma), float(q), float(s_hi), float(s_lo),
                    tied, trace, len(trace) - 1, attempt)


def gmm_label(state: GmmState, scores) -> LabelVector:
    """Hard labels: attended iff its component likelihood strictly exceeds the other.

    With a shared sigma this is y > (mu_pos + mu_neg) / 2; a score exactly at
    the midpoint is labelled unattended.
    """
    y = scores.y if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=np.float64).ravel()
    if state.tied:
        hard = y > state.threshold
    else:
        lp, ln = state.log_densities(y)
        hard = lp > ln
    return LabelVector(hard.astype(np.float64))

"""Self-training decoder (batch and streaming) and the supervised baselines."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional

import numpy as np
from scipy.special import expit

from .cca import CcaModel, features, features_from_matrices, fit_accumulator
from .classify import (GmmState, MildaState, fit_gmm, fit_lda, fit_milda, gmm_label,
                       milda_from_moments, soft_labels)
from .core_io import LabelVector, LagConfig, SegmentSet
from .errors import DegenerateCovariance, DegenerateLabels, NoPositiveMass, ShapeMismatch
from .linalg import CovarianceAccumulator, grouped_xx

log = logging.getLogger(__name__)

INIT_MODES = ("uniform_half", "random", "provided")


@dataclass(frozen=True)
class UnsupervisedConfig:
    i_max: int = 10
    ridge: float = 1e-6
    init_labels: str = "uniform_half"
    p0: Optional[np.ndarray] = None
    final_discriminative: bool = True
    label_mode: str = "soft"
    early_stop: bool = True
    tol: float = 0.01
    gmm_tied: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if self.init_labels not in INIT_MODES:
            raise ValueError(f"init_labels must be one of {INIT_MODES}")
        if self.label_mode not in ("soft", "hard"):
            raise ValueError("label_mode must be 'soft' or 'hard'")
        if self.init_labels == "provided" and self.p0 is None:
            raise ValueError("init_labels='provided' needs p0")


@dataclass
class IterationSummary:
    iteration: int
    mode: str
    eigenvalues: np.ndarray
    mean_abs_dp: float
    scores: np.ndarray = field(repr=False)
    p_next: np.ndarray = field(repr=False)


@dataclass
class DecodeResult:
    scores: np.ndarray
    p_soft: np.ndarray
    labels: np.ndarray
    gmm: GmmState
    model: CcaModel
    milda: MildaState
    iterations: List[IterationSummary]
    converged_at: Optional[int] = None

    @property
    def n_iter(self) -> int:
        return len(self.iterations)


def initial_labels(N: int, cfg: UnsupervisedConfig) -> np.ndarray:
    if cfg.init_labels == "uniform_half":
        return np.full(N, 0.5)
    if cfg.init_labels == "random":
        return np.random.default_rng(cfg.seed).uniform(0.0, 1.0, N)
    p0 = np.asarray(cfg.p0, dtype=np.float64).ravel()
    if p0.shape != (N,):
        raise ShapeMismatch(f"{p0.shape[0]} initial labels for {N} windows")
    return np.clip(p0, 0.0, 1.0)


def _iterate(segments, stats, p, mode, cfg):
    if mode == "discriminative" and np.max(np.abs(2.0 * p - 1.0)) < 1e-12:
        raise DegenerateLabels("discriminative iteration needs informative labels")
    acc = stats.accumulator(p)
    model = fit_accumulator(acc, segments.cfg, mode, cfg.ridge)
    F = features(model, segments)
    milda = fit_milda(F)
    y = milda.scores(F)
    p_next = soft_labels(y).p
    if cfg.label_mode == "hard":
        p_next = (p_next > 0.5).astype(np.float64)
    return model, milda, y, p_next


def run_batch(segments: SegmentSet, cfg: UnsupervisedConfig = UnsupervisedConfig()) -> DecodeResult:
    """Label every window without supervision.

    Each iteration refits CCA with the current soft labels, scores the windows
    with MILDA and turns the scores into new soft labels through a sigmoid. The
    last iteration uses the discriminative CCA objective when
    ``cfg.final_discriminative`` is set. Iteration stops at ``i_max`` or once
    the mean absolute label change drops below ``cfg.tol``, in which case one
    more (discriminative) iteration is still run. A two-component GMM on the
    final scores then sets the hard labels.
    """
    K = segments.cfg.K
    if segments.N < 2 * K:
        raise ValueError(f"need at least 2K={2 * K} windows, got {segments.N}")
    stats = segments.stats()
    p = initial_labels(segments.N, cfg)
    history: List[IterationSummary] = []
    converged_at = None
    final_pending = False
    i = 1
    while True:
        is_final = i >= cfg.i_max or final_pending
        mode = "discriminative" if (is_final and cfg.final_discriminative) else "normal"
        model, milda, y, p_next = _iterate(segments, stats, p, mode, cfg)
        dp = float(np.mean(np.abs(p_next - p)))
        history.append(IterationSummary(i, mode, model.eigenvalues.copy(), dp, y, p_next))
        log.debug("iteration %d (%s): mean |dp| = %.4f", i, mode, dp)
        if is_final:
            break
        if cfg.early_stop and dp < cfg.tol:
            converged_at = i
            if not cfg.final_discriminative:
                break
            final_pending = True
        p = p_next
        i += 1
    gmm = fit_gmm(y, tied=cfg.gmm_tied)
    hard = gmm_label(gmm, y).hard
    return DecodeResult(y, soft_labels(y).p, hard, gmm, model, milda, history, converged_at)


# ---------------------------------------------------------------------------
# supervised baselines
# ---------------------------------------------------------------------------

def fold_ids(N: int, n_folds: int = 10) -> np.ndarray:
    """Contiguous folds, so neighbouring windows stay on the same side."""
    n_folds = min(n_folds, N)
    return (np.arange(N) * n_folds) // N


def _classifier_scores(kind, F_train, y_train, F_test):
    if kind == "lda":
        return fit_lda(F_train, y_train).scores(F_test)
    if kind == "milda":
        return fit_milda(F_train).scores(F_test)
    raise ValueError(f"unknown classifier {kind!r}")


def supervised_cv_scores(segments: SegmentSet, labels, mode: str = "normal",
                         classifier: str = "lda", n_folds: int = 10,
                         ridge: float = 1e-6) -> np.ndarray:
    """Out-of-fold scores of supervised CCA + LDA (or MILDA) with k-fold CV.

    CCA and the classifier only see the training folds; the returned scores of
    every window come from the model that did not train on it.
    """
    lab = np.asarray(labels, dtype=bool).ravel()
    if lab.shape != (segments.N,):
        raise ShapeMismatch(f"{lab.shape[0]} labels for {segments.N} windows")
    folds = fold_ids(segments.N, n_folds)
    n_f = int(folds.max()) + 1
    stats = segments.stats(with_xx=False)
    fold_xx = grouped_xx(segments, folds, n_f)
    total = fold_xx.sum(axis=0)
    if stats.xx_sum is None:
        stats.xx_sum = total
    p = lab.astype(np.float64)
    out = np.empty(segments.N)
    for f in range(n_f):
        train = folds != f
        test = ~train
        acc = stats.accumulator(p[train], xx_sum=total - fold_xx[f], idx=train)
        model = fit_accumulator(acc, segments.cfg, mode, ridge)
        F = features(model, segments)
        out[test] = _classifier_scores(classifier, F[train], lab[train], F[test])
    return out


def supervised_fit(segments: SegmentSet, labels, mode: str = "normal",
                   classifier: str = "lda", ridge: float = 1e-6):
    """Supervised CCA + classifier trained on every window."""
    lab = np.asarray(labels, dtype=bool).ravel()
    acc = segments.stats().accumulator(lab.astype(np.float64))
    model = fit_accumulator(acc, segments.cfg, mode, ridge)
    F = features(model, segments)
    clf = fit_lda(F, lab) if classifier == "lda" else fit_milda(F)
    return model, clf, F


# ---------------------------------------------------------------------------
# streaming decoder
# ---------------------------------------------------------------------------

@dataclass
class OnlineState:
    """Exponentially forgotten sufficient statistics of the streaming decoder.

    Every statistic follows X' = alpha X + X(n). Filters (CCA, MILDA, GMM) are
    recomputed from the statistics every ``U`` segments. The GMM lives on
    standardised scores (y - mean) / std so that a MILDA refit, which rescales
    the scores, does not invalidate its statistics.
    """

    lag: LagConfig
    n_channels: int
    alpha: float = 0.99
    U: int = 10
    ridge: float = 1e-6
    acc: CovarianceAccumulator = None
    model: Optional[CcaModel] = None
    milda: Optional[MildaState] = None
    gmm: Optional[GmmState] = None
    feat_w: float = 0.0
    feat_sum: np.ndarray = None
    feat_sq: np.ndarray = None
    # r, r*u, r*u^2 for the attended side; same for the other side
    gmm_stats: np.ndarray = field(default_factory=lambda: np.zeros(6))
    n_seen: int = 0
    n_refits: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.U < 1:
            raise ValueError("refit period U must be >= 1")
        dx = self.n_channels * self.lag.L_x
        if self.acc is None:
            self.acc = CovarianceAccumulator(dx, self.lag.L_s)
        K = self.lag.K
        if self.feat_sum is None:
            self.feat_sum = np.zeros(K)
        if self.feat_sq is None:
            self.feat_sq = np.zeros((K, K))

    def feature_moments(self):
        mean = self.feat_sum / self.feat_w
        cov = self.feat_sq / self.feat_w - np.outer(mean, mean)
        return mean, 0.5 * (cov + cov.T)

    def standardise(self, y: float) -> float:
        mean, cov = self.feature_moments()
        w = self.milda.w
        sd = float(np.sqrt(max(w @ cov @ w, 0.0)))
        return (y - float(w @ mean)) / sd if sd > 0 else 0.0

    def refit(self):
        a = self.acc
        if a.weight_pos > 0 and a.n_segments > 0:
            try:
                self.model = fit_accumulator(a, self.lag, "normal", self.ridge)
            except NoPositiveMass:
                pass
        if self.feat_w > self.lag.K + 1:
            mean, cov = self.feature_moments()
            try:
                self.milda = milda_from_moments(mean, cov)
            except DegenerateCovariance:
                self.milda = None
        g = self.gmm_stats
        if g[0] > 1.0 and g[3] > 1.0:
            mu_p, mu_n = g[1] / g[0], g[4] / g[3]
            var = (g[2] - g[0] * mu_p ** 2 + g[5] - g[3] * mu_n ** 2) / (g[0] + g[3])
            if var > 1e-12 and mu_p > mu_n:
                self.gmm = GmmState(float(mu_p), float(mu_n), float(np.sqrt(var)),
                                    float(g[0] / (g[0] + g[3])))
        self.n_refits += 1


@dataclass(frozen=True)
class OnlineOutput:
    index: int
    label: bool
    p: float
    score: float
    provisional: bool


def segment_stream(segments: SegmentSet) -> Iterator:
    for n in range(segments.N):
        yield segments.X[n], segments.S[n]


def run_online(stream: Iterable, state: OnlineState) -> Iterator[OnlineOutput]:
    """Classify each incoming (X_n, S_n) pair, then fold it into the statistics.

    Segments seen before the first complete filter set are labelled with
    p = 0.5 and flagged provisional.
    """
    a = state.alpha
    for X, S in stream:
        X = np.asarray(X, dtype=np.float64)
        S = np.asarray(S, dtype=np.float64)
        rho = y = u = None
        p, label, provisional = 0.5, False, True
        if state.model is not None:
            rho = features_from_matrices(state.model, X, S)
            if state.milda is not None:
                y = float(state.milda.w @ rho)
                u = state.standardise(y)
                p = float(expit(u))
                if state.gmm is not None:
                    label = u > state.gmm.threshold
                    provisional = False
                else:
                    label = u > 0.0
        yield OnlineOutput(state.n_seen, bool(label), p, np.nan if y is None else y, provisional)

        state.acc.decay(a).add(X, S, p)
        if rho is not None:
            state.feat_w = a * state.feat_w + 1.0
            state.feat_sum = a * state.feat_sum + rho
            state.feat_sq = a * state.feat_sq + np.outer(rho, rho)
        if u is not None:
            r = float(state.gmm.posterior(u)) if state.gmm is not None else float(u > 0.0)
            state.gmm_stats = a * state.gmm_stats + np.array(
                [r, r * u, r * u * u, 1.0 - r, (1.0 - r) * u, (1.0 - r) * u * u])
        state.n_seen += 1
        if state.n_seen % state.U == 0:
            state.refit()

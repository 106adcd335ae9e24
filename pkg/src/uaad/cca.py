"""CCA decoder/encoder fitting and per-window correlation features."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .core_io import LabelVector, LagConfig, SegmentSet
from .errors import DegenerateLabels, NoPositiveMass, NotPositiveDefinite, ShapeMismatch
from .linalg import CovarianceAccumulator, finalize, gevd_topk

log = logging.getLogger(__name__)

DEFAULT_RIDGE = 1e-6
MAX_RIDGE_RETRIES = 3
_TINY = 1e-300


@dataclass(frozen=True)
class CcaModel:
    """K decoder/encoder pairs. ``decoders`` is K x (C*L_x), ``encoders`` K x L_s.

    ``eigenvalues`` are the generalized eigenvalues of the decoder problem; the
    matching canonical correlation on the training covariances is their square
    root.
    """

    cfg: LagConfig
    decoders: np.ndarray
    encoders: np.ndarray
    eigenvalues: np.ndarray
    mode: str = "normal"
    ridge: float = DEFAULT_RIDGE

    @property
    def K(self) -> int:
        return self.decoders.shape[0]

    @property
    def n_channels(self) -> int:
        return self.decoders.shape[1] // self.cfg.L_x

    @property
    def canonical_correlations(self) -> np.ndarray:
        return np.sqrt(np.clip(self.eigenvalues, 0.0, None))


def _solve_pairs(R_xx, R_ss, R_xs, K):
    ss_fac = cho_factor(R_ss, lower=True)
    G = cho_solve(ss_fac, R_xs.T)              # R_ss^-1 R_xs^T
    A = R_xs @ G
    lam, D = gevd_topk(A, R_xx, K)
    # pin the joint sign of each pair: largest-magnitude decoder weight positive
    flip = D[np.argmax(np.abs(D), axis=0), np.arange(K)] < 0
    D[:, flip] *= -1.0
    E = G @ D                                  # e_k ∝ R_ss^-1 R_xs^T d_k
    for k in range(K):
        nrm = float(E[:, k] @ R_ss @ E[:, k])
        if nrm > _TINY:
            E[:, k] /= np.sqrt(nrm)
        else:
            # no cross-correlation along this decoder; any unit-energy encoder
            E[:, k] = 0.0
            E[0, k] = 1.0 / np.sqrt(R_ss[0, 0])
    return lam, D, E


def fit_accumulator(acc: CovarianceAccumulator, cfg: LagConfig, mode: str = "normal",
                    ridge: float = DEFAULT_RIDGE) -> CcaModel:
    """Fit K CCA pairs from accumulated statistics.

    On a Cholesky failure the ridge is raised by a decade, at most three times.
    """
    r = ridge
    for attempt in range(MAX_RIDGE_RETRIES + 1):
        R_xx, R_ss, R_xs = finalize(acc, mode, r)
        try:
            lam, D, E = _solve_pairs(R_xx, R_ss, R_xs, cfg.K)
            break
        except (NotPositiveDefinite, np.linalg.LinAlgError) as exc:
            if attempt == MAX_RIDGE_RETRIES:
                raise NotPositiveDefinite(
                    f"covariance not positive definite even with ridge {r:g}") from exc
            r = r * 10.0 if r > 0 else DEFAULT_RIDGE
            log.info("raising CCA ridge to %g", r)
    return CcaModel(cfg, np.ascontiguousarray(D.T), np.ascontiguousarray(E.T), lam, mode, r)


def fit(segments: SegmentSet, labels, mode: str = "normal",
        ridge: float = DEFAULT_RIDGE) -> CcaModel:
    """Fit CCA on windowed data with soft labels.

    ``labels`` is a LabelVector or array of p(n). Normal mode maximises the
    p-weighted EEG/envelope correlation; discriminative mode maximises the
    difference between the p-weighted and (1 - p)-weighted correlations.
    """
    p = labels.p if isinstance(labels, LabelVector) else np.asarray(labels, dtype=np.float64)
    if p.shape != (segments.N,):
        raise ShapeMismatch(f"{p.shape} labels for {segments.N} windows")
    if mode == "discriminative" and (p.sum() <= 1e-12 or (1.0 - p).sum() <= 1e-12
                                     or np.max(np.abs(2.0 * p - 1.0)) < 1e-12):
        raise DegenerateLabels("discriminative CCA needs label mass on both classes")
    acc = segments.stats().accumulator(p)
    try:
        return fit_accumulator(acc, segments.cfg, mode, ridge)
    except NoPositiveMass as exc:
        if mode == "discriminative":
            raise DegenerateLabels(str(exc)) from exc
        raise


def _moments_to_rho(m, return_flags):
    den = m[..., 1] * m[..., 2]
    flags = ~(den > 1e-300)
    rho = np.where(flags, 0.0, m[..., 0] / np.sqrt(np.where(flags, 1.0, den)))
    rho = np.clip(rho, -1.0, 1.0)
    if flags.any():
        log.warning("%d window/component pairs with zero projected energy set to 0",
                    int(flags.sum()))
    return (rho, flags) if return_flags else rho


def project(model: CcaModel, segments: SegmentSet):
    """Decoded EEG and encoded envelope over the whole recording, each K x T."""
    if segments.dim_x != model.decoders.shape[1] or segments.dim_s != model.encoders.shape[1]:
        raise ShapeMismatch("model and segments disagree on lag layout")
    K = model.K
    W = model.decoders.reshape(K, segments.n_channels, model.cfg.L_x)
    z = _kernels.lag_project(segments.eeg_padded, W, segments.eeg_start, segments.n_samples)
    v = _kernels.lag_project(segments.env_padded, model.encoders.reshape(K, 1, model.cfg.L_s),
                             segments.pad_s, segments.n_samples)
    return z, v


def features(model: CcaModel, segments: SegmentSet, return_flags: bool = False):
    """Per-window correlation features rho(n), shape (N, K).

    rho_k(n) = d_k^T X_n S_n^T e_k / sqrt(d_k^T X_n X_n^T d_k * e_k^T S_n S_n^T e_k).
    Windows whose projected energy vanishes get rho = 0; with
    ``return_flags=True`` a boolean (N, K) mask of those windows is returned too.
    """
    z, v = project(model, segments)
    m = _kernels.window_moments(z, v, segments.starts, segments.tau)
    return _moments_to_rho(m, return_flags)


def features_from_matrices(model: CcaModel, X, S, return_flags: bool = False):
    """Correlation features for one explicit (X_n, S_n) pair, shape (K,)."""
    zx = model.decoders @ X
    vs = model.encoders @ S
    m = np.stack([(zx * vs).sum(1), (zx * zx).sum(1), (vs * vs).sum(1)], axis=-1)
    return _moments_to_rho(m, return_flags)

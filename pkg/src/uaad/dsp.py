"""Envelope extraction, band-pass/resampling and PCA channel reduction."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np
from scipy import signal

from .core_io import SignalBuffer
from .errors import InvalidBand, NotMono, RankDeficient, RateTooLow

MIN_AUDIO_FS = 8000.0
ERB_LO, ERB_HI = 150.0, 4000.0


@dataclass(frozen=True)
class PreprocConfig:
    n_bands: int = 15
    power_exponent: float = 0.6
    band_lo: float = 0.5
    band_hi: float = 32.0
    fs_out: float = 64.0
    filter_order: int = 4
    lowpass: float = 32.0

    def __post_init__(self):
        if not 0.0 < self.band_lo < self.band_hi <= self.fs_out / 2.0:
            raise InvalidBand(
                f"need 0 < band_lo < band_hi <= fs_out/2, got {self.band_lo}, {self.band_hi}, "
                f"{self.fs_out}")
        if self.power_exponent <= 0:
            raise ValueError("power_exponent must be > 0")
        if self.n_bands < 1 or self.filter_order < 1:
            raise ValueError("n_bands and filter_order must be >= 1")


def erb_space(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` centre frequencies equally spaced on the ERB-rate scale."""
    def to_erb(f):
        return 21.4 * np.log10(1.0 + 0.00437 * f)

    def from_erb(e):
        return (10.0 ** (e / 21.4) - 1.0) / 0.00437

    if n == 1:
        return np.array([from_erb(0.5 * (to_erb(lo) + to_erb(hi)))])
    return from_erb(np.linspace(to_erb(lo), to_erb(hi), n))


def _filterbank(fs, cfg):
    """Band-pass sections, each one ERB wide around its centre."""
    out = []
    # keep the top band's upper edge below 0.45 fs (matters near the 8 kHz minimum)
    top = min(ERB_HI, (0.45 * fs - 12.35) / (1.0 + 12.35 * 4.37e-3))
    for fc in erb_space(ERB_LO, top, cfg.n_bands):
        bw = 24.7 * (4.37e-3 * fc + 1.0)
        lo, hi = fc - bw / 2.0, fc + bw / 2.0
        # butter() doubles the order for band-pass designs
        out.append(signal.butter(max(1, cfg.filter_order // 2), [lo, hi], btype="bandpass",
                                 fs=fs, output="sos"))
    return out


def subband_envelope(audio: SignalBuffer, cfg: PreprocConfig = PreprocConfig()) -> SignalBuffer:
    """Power-law compressed subband envelopes summed with equal weights, at the audio rate.

    Non-negative by construction; this is the stage before the final band-pass.
    """
    if audio.n_channels != 1:
        raise NotMono(f"audio must be mono, got {audio.n_channels} channels")
    if audio.fs < MIN_AUDIO_FS:
        raise RateTooLow(f"audio at {audio.fs} Hz, need at least {MIN_AUDIO_FS:g} Hz")
    x = np.asarray(audio.data[0], dtype=np.float64)
    lp = signal.butter(cfg.filter_order, min(cfg.lowpass, 0.45 * audio.fs), btype="lowpass",
                       fs=audio.fs, output="sos")
    total = np.zeros_like(x)
    for sos in _filterbank(audio.fs, cfg):
        band = np.abs(signal.sosfiltfilt(sos, x)) ** cfg.power_exponent
        total += signal.sosfiltfilt(lp, band)
    # the smoothing low-pass can ring slightly below zero
    np.maximum(total, 0.0, out=total)
    return SignalBuffer(total[None, :], audio.fs, "envelope")


def extract_envelope(audio: SignalBuffer, cfg: PreprocConfig = PreprocConfig()) -> SignalBuffer:
    env = subband_envelope(audio, cfg)
    return bandpass_resample(env, cfg.band_lo, cfg.band_hi, cfg.fs_out, cfg.filter_order)


def resample(sig: SignalBuffer, fs_out: float) -> SignalBuffer:
    """Polyphase rational resampling with an anti-alias cutoff at 0.9 of the output Nyquist."""
    if fs_out == sig.fs:
        return sig
    frac = Fraction(fs_out / sig.fs).limit_denominator(10000)
    up, down = frac.numerator, frac.denominator
    half = 10 * max(up, down)
    cutoff = 0.9 * min(1.0 / up, 1.0 / down)
    taps = signal.firwin(2 * half + 1, cutoff, window=("kaiser", 5.0)) * up
    y = signal.resample_poly(sig.data, up, down, axis=1, window=taps)
    return sig.with_data(y, fs=sig.fs * up / down)


def bandpass_resample(sig: SignalBuffer, lo: float, hi: float, fs_out: float,
                      order: int = 4) -> SignalBuffer:
    """Zero-phase band-pass at the input rate, then resample to ``fs_out``."""
    nyq = min(sig.fs, 2.0 * fs_out) / 2.0
    if not 0.0 < lo < hi < nyq:
        raise InvalidBand(f"band [{lo}, {hi}] Hz must satisfy 0 < lo < hi < {nyq:g}")
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=sig.fs, output="sos")
    y = signal.sosfiltfilt(sos, np.asarray(sig.data, dtype=np.float64), axis=1)
    return resample(sig.with_data(y), fs_out)


def remove_artifacts(eeg: SignalBuffer, hook: Optional[Callable] = None) -> SignalBuffer:
    """Pass-through unless a ``hook(SignalBuffer) -> SignalBuffer`` is supplied."""
    return eeg if hook is None else hook(eeg)


@dataclass(frozen=True)
class PcaBasis:
    components: np.ndarray          # C x C'
    explained_variance: np.ndarray  # C', non-increasing
    mean: np.ndarray                # C

    @property
    def n_components(self) -> int:
        return self.components.shape[1]


def fit_pca(eeg: SignalBuffer, n_components: int) -> PcaBasis:
    X = np.asarray(eeg.data, dtype=np.float64)
    C, T = X.shape
    if not 1 <= n_components <= C:
        raise ValueError(f"n_components must be in [1, {C}]")
    if T <= C:
        raise ValueError("PCA needs more samples than channels")
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    cov = Xc @ Xc.T / (T - 1)
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    tol = 1e-10 * max(abs(evals[-1]), 1e-300)
    if evals[0] < -tol:
        raise RankDeficient(f"channel covariance has negative eigenvalue {evals[0]:.3g}")
    order = np.argsort(evals)[::-1][:n_components]
    return PcaBasis(evecs[:, order], np.clip(evals[order], 0.0, None), mean)


def apply_pca(eeg: SignalBuffer, basis: PcaBasis) -> SignalBuffer:
    X = np.asarray(eeg.data, dtype=np.float64)
    if X.shape[0] != basis.components.shape[0]:
        raise ValueError("basis and signal disagree on channel count")
    Y = basis.components.T @ (X - basis.mean[:, None])
    names = tuple(f"pc{i + 1}" for i in range(basis.n_components))
    return SignalBuffer(Y, eeg.fs, eeg.kind, names)


def invert_pca(pcs: SignalBuffer, basis: PcaBasis) -> SignalBuffer:
    X = basis.components @ np.asarray(pcs.data, dtype=np.float64) + basis.mean[:, None]
    return SignalBuffer(X, pcs.fs, pcs.kind)

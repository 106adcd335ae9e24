"""Synthetic EEG/envelope recordings with a known attention trace.

EEG follows x(t) = alpha(t) (A * s)(t) + (B * s)(t) + n(t): an attention-gated
response, an attention-independent "hearing" response and spatially correlated
noise, where ``*`` is a per-channel causal FIR convolution with the envelope s.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import signal

from .core_io import LagConfig, SegmentSet, SignalBuffer, segment
from .errors import InvalidProfile, SingleClass, SingleClassTruth, Unreachable


@dataclass(frozen=True)
class AttentionSpan:
    start: float
    end: float
    alpha: float
    attended: Optional[bool] = None

    @property
    def is_attended(self) -> bool:
        return self.alpha > 0.5 if self.attended is None else bool(self.attended)


def default_profile(duration: float, block: float = 60.0, alpha_pos: float = 1.0,
                    alpha_neg: float = 0.0, pattern: str = "AAAU") -> tuple:
    """Repeating blocks; the default AAAU pattern gives 75 % attended time."""
    spans = []
    t, i = 0.0, 0
    while t < duration - 1e-9:
        end = min(duration, t + block)
        att = pattern[i % len(pattern)] == "A"
        spans.append(AttentionSpan(t, end, alpha_pos if att else alpha_neg, att))
        t, i = end, i + 1
    return tuple(spans)


@dataclass(frozen=True)
class SynthConfig:
    C: int = 24
    fs: float = 64.0
    duration: float = 600.0
    L_mix: int = 16
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    hearing_ratio: float = 0.3
    noise_power: float = 1.0
    attention_profile: Optional[Sequence[AttentionSpan]] = None
    alpha_pos: float = 1.0
    alpha_neg: float = 0.0
    block: float = 60.0
    drift: float = 0.0
    env_band: tuple = (0.5, 10.0)
    seed: int = 0

    def replace(self, **kw) -> "SynthConfig":
        return dataclasses.replace(self, **kw)

    def profile(self) -> tuple:
        if self.attention_profile is not None:
            return tuple(self.attention_profile)
        return default_profile(self.duration, self.block, self.alpha_pos, self.alpha_neg)

    def validate(self):
        if self.C < 1 or self.fs <= 0 or self.duration <= 0 or self.L_mix < 1:
            raise InvalidProfile("C, fs, duration and L_mix must be positive")
        if self.noise_power < 0:
            raise InvalidProfile("noise_power must be >= 0")
        spans = sorted(self.profile(), key=lambda s: s.start)
        if not spans:
            raise InvalidProfile("attention profile is empty")
        t = 0.0
        for sp in spans:
            if not 0.0 <= sp.alpha <= 1.0:
                raise InvalidProfile(f"alpha {sp.alpha} outside [0, 1]")
            if sp.end <= sp.start:
                raise InvalidProfile(f"span [{sp.start}, {sp.end}) is empty")
            if abs(sp.start - t) > 1e-9:
                raise InvalidProfile(f"spans overlap or leave a gap at t={t}")
            t = sp.end
        if abs(t - self.duration) > 1e-9:
            raise InvalidProfile(f"spans end at {t}, recording lasts {self.duration}")
        for name in ("A", "B"):
            M = getattr(self, name)
            if M is not None and np.shape(M) != (self.C, self.L_mix):
                raise InvalidProfile(f"{name} must be C x L_mix = {self.C} x {self.L_mix}")


@dataclass(frozen=True)
class SynthDataset:
    eeg: SignalBuffer
    envelope: SignalBuffer
    envelope_raw: SignalBuffer
    attended: np.ndarray
    alpha_trace: np.ndarray
    A: np.ndarray
    B: np.ndarray
    noise_mixing: np.ndarray
    noise_fir: np.ndarray
    noise_scale: float
    cfg: SynthConfig = field(repr=False)

    def labels_true(self, tau: float, overlap: float = 0.0) -> np.ndarray:
        tau_s = int(round(tau * self.eeg.fs))
        hop = max(1, int(round(tau_s * (1.0 - overlap))))
        starts = np.arange(0, self.eeg.n_samples - tau_s + 1, hop)
        a = self.attended.astype(float)
        return np.array([a[s:s + tau_s].mean() > 0.5 for s in starts], dtype=bool)

    def segments(self, lag: LagConfig = LagConfig(), tau: float = 10.0,
                 overlap: float = 0.0) -> SegmentSet:
        return segment(self.eeg, self.envelope, lag, tau, overlap, attended_mask=self.attended)


def _smooth_kernels(rng, C, L, rank=2):
    """C x L FIR kernels: a sum of ``rank`` spatial patterns times smooth temporal shapes."""
    out = np.zeros((C, L))
    win = np.hanning(L + 2)[1:-1]
    for _ in range(rank):
        shape = np.convolve(rng.standard_normal(L + 4), np.hanning(5), mode="valid")[:L] * win
        shape /= np.linalg.norm(shape)
        out += np.outer(rng.standard_normal(C), shape)
    return out


def _envelope(rng, T, fs, band):
    """Positive, smoothed, rectified pink-ish noise and its zero-mean band-limited part."""
    pad = int(4 * fs)
    n = T + 2 * pad
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / fs)
    spec[1:] /= np.sqrt(f[1:])
    spec[0] = 0.0
    pink = np.fft.irfft(spec, n)
    sos = signal.butter(4, band[1], btype="lowpass", fs=fs, output="sos")
    carrier = signal.sosfiltfilt(sos, pink)
    width = max(3, int(round(fs / band[1])))
    kern = np.hanning(width + 2)[1:-1]
    raw = np.convolve(np.abs(carrier), kern / kern.sum(), mode="same")[pad:pad + T]
    raw = raw / raw.mean()
    sos_bp = signal.butter(2, band, btype="bandpass", fs=fs, output="sos")
    s = signal.sosfiltfilt(sos_bp, raw)
    return raw, s / s.std()


def _noise_fir(fs, n_taps=129):
    """Pink-ish EEG noise shaping filter, 1/sqrt(f) magnitude between 0.5 and ~0.9 Nyquist."""
    nyq = fs / 2.0
    freqs = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 0.9 * nyq, nyq])
    freqs = np.unique(np.clip(freqs, 0, nyq))
    gain = np.where(freqs < 0.5, 0.0, 1.0 / np.sqrt(np.maximum(freqs, 0.5)))
    gain[-1] = 0.0
    h = signal.firwin2(n_taps, freqs, gain, fs=fs)
    return h / np.linalg.norm(h)


def _causal_conv(K, s):
    return np.stack([signal.lfilter(k, [1.0], s) for k in K])


def generate(cfg: SynthConfig) -> SynthDataset:
    """Draw one recording; identical configs (including ``seed``) give identical data."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    T = int(round(cfg.duration * cfg.fs))
    raw, s = _envelope(rng, T, cfg.fs, cfg.env_band)
    A = _smooth_kernels(rng, cfg.C, cfg.L_mix) if cfg.A is None else np.asarray(cfg.A, float)
    B = _smooth_kernels(rng, cfg.C, cfg.L_mix) if cfg.B is None else np.asarray(cfg.B, float)
    resp_a = _causal_conv(A, s)
    resp_b = _causal_conv(B, s)
    na, nb = np.linalg.norm(resp_a), np.linalg.norm(resp_b)
    if cfg.B is None and nb > 0:
        scale_b = cfg.hearing_ratio * na / nb
        B = B * scale_b
        resp_b = resp_b * scale_b

    t = np.arange(T) / cfg.fs
    alpha = np.zeros(T)
    attended = np.zeros(T, dtype=bool)
    for sp in cfg.profile():
        m = (t >= sp.start) & (t < sp.end)
        alpha[m] = sp.alpha
        attended[m] = sp.is_attended
    if cfg.drift > 0:
        wander = signal.sosfiltfilt(signal.butter(1, 0.01, fs=cfg.fs, output="sos"),
                                    rng.standard_normal(T))
        alpha = np.clip(alpha + cfg.drift * wander / (wander.std() + 1e-12), 0.0, 1.0)

    C = cfg.C
    q, _ = np.linalg.qr(rng.standard_normal((C, C)))
    mixing = q * (1.0 / np.sqrt(1.0 + np.arange(C)))[None, :]
    mixing /= np.sqrt(np.trace(mixing @ mixing.T) / C)
    fir = _noise_fir(cfg.fs)
    white = rng.standard_normal((C, T + len(fir) - 1))
    noise = np.stack([np.convolve(row, fir, mode="valid") for row in mixing @ white])
    sig_power = float(np.mean(resp_a ** 2))
    noise_scale = float(np.sqrt(cfg.noise_power * sig_power))

    eeg = alpha[None, :] * resp_a + resp_b + noise_scale * noise
    names = tuple(f"ch{i + 1}" for i in range(C))
    return SynthDataset(
        eeg=SignalBuffer(eeg, cfg.fs, "eeg", names),
        envelope=SignalBuffer(s[None, :], cfg.fs, "envelope"),
        envelope_raw=SignalBuffer(raw[None, :], cfg.fs, "envelope"),
        attended=attended, alpha_trace=alpha, A=A, B=B, noise_mixing=mixing,
        noise_fir=fir, noise_scale=noise_scale, cfg=cfg)


def _supervised_auc(cfg: SynthConfig, lag: LagConfig, tau: float, seeds) -> float:
    from .pipeline import supervised_cv_scores
    from .metrics import auc_fast
    vals = []
    for sd in seeds:
        data = generate(cfg.replace(seed=sd))
        segs = data.segments(lag, tau)
        try:
            y = supervised_cv_scores(segs, segs.labels_true, mode="normal", classifier="lda")
            vals.append(auc_fast(y, segs.labels_true))
        except (SingleClass, SingleClassTruth) as exc:
            # too few windows for every training fold to see both classes
            raise Unreachable(f"supervised AUC not estimable at {cfg.duration:g} s: {exc}") \
                from exc
    return float(np.mean(vals))


def calibrate_snr(cfg: SynthConfig, target_auc: float, tol: float = 0.02,
                  lag: LagConfig = LagConfig(), tau: float = 10.0, seeds=None,
                  bounds=(1e-2, 1e6), max_steps: int = 30) -> SynthConfig:
    """Bisect ``noise_power`` until supervised CCA+LDA (10-fold) reaches ``target_auc``.

    The AUC is averaged over ``seeds`` (default: the config's own seed). Raises
    Unreachable when no noise level in ``bounds`` lands within ``tol``.
    """
    if not 0.5 < target_auc < 1.0:
        raise ValueError("target AUC must lie in (0.5, 1)")
    seeds = [cfg.seed] if seeds is None else list(seeds)
    auc = _supervised_auc(cfg, lag, tau, seeds)
    if abs(auc - target_auc) <= tol:
        return cfg
    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    auc_lo = _supervised_auc(cfg.replace(noise_power=float(np.exp(lo))), lag, tau, seeds)
    auc_hi = _supervised_auc(cfg.replace(noise_power=float(np.exp(hi))), lag, tau, seeds)
    for val, x in ((auc_lo, lo), (auc_hi, hi)):
        if abs(val - target_auc) <= tol:
            return cfg.replace(noise_power=float(np.exp(x)))
    if target_auc > auc_lo + tol or target_auc < auc_hi - tol:
        raise Unreachable(
            f"target AUC {target_auc} outside achievable [{auc_hi:.3f}, {auc_lo:.3f}] "
            f"at {cfg.duration:g} s")
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        val = _supervised_auc(cfg.replace(noise_power=float(np.exp(mid))), lag, tau, seeds)
        if abs(val - target_auc) <= tol:
            return cfg.replace(noise_power=float(np.exp(mid)))
        if val > target_auc:
            lo = mid
        else:
            hi = mid
    raise Unreachable(f"no noise level within tol {tol} of AUC {target_auc} "
                      f"(last {val:.3f} at noise_power {np.exp(mid):.4g})")

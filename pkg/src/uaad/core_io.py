"""Signal containers, the AAD1 tensor file format and window segmentation."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (BadMagic, IoFailure, MissingSidecar, NonFiniteData, RateMismatch,
                     ShapeMismatch, TruncatedPayload, WindowTooShort)

MAGIC = b"AAD1"
KINDS = ("eeg", "envelope", "audio")


@dataclass(frozen=True)
class SignalBuffer:
    """Multichannel sampled signal, ``data`` is channels x samples."""

    data: np.ndarray
    fs: float
    kind: str = "eeg"
    channel_names: Optional[tuple] = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeMismatch(f"signal must be C x T with C, T >= 1, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float64)
        if not np.all(np.isfinite(data)):
            raise NonFiniteData("signal contains NaN or Inf samples")
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "fs", float(self.fs))
        if self.channel_names is not None:
            names = tuple(str(n) for n in self.channel_names)
            if len(names) != data.shape[0]:
                raise ShapeMismatch("channel_names length does not match channel count")
            object.__setattr__(self, "channel_names", names)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    def with_data(self, data, fs=None, kind=None, keep_names=True) -> "SignalBuffer":
        names = self.channel_names if keep_names else None
        if names is not None and len(names) != np.shape(data)[0]:
            names = None
        return SignalBuffer(data, self.fs if fs is None else fs, kind or self.kind, names)


@dataclass(frozen=True)
class LabelVector:
    """Soft attention labels p(n) in [0, 1]; ``hard`` thresholds at 0.5."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).ravel()
        if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("soft labels must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @property
    def hard(self) -> np.ndarray:
        return self.p > 0.5

    def __len__(self):
        return len(self.p)


@dataclass(frozen=True)
class LagConfig:
    """Lag layout of the EEG and envelope embeddings.

    ``L_x``/``L_s`` are the number of lags, ``S`` the extra EEG delay in
    samples and ``K`` the number of CCA component pairs.
    """

    L_x: int = 17
    L_s: int = 17
    S: int = 13
    K: int = 2

    def __post_init__(self):
        if self.L_x < 1 or self.L_s < 1 or self.K < 1:
            raise ValueError("L_x, L_s and K must be >= 1")
        if self.S < 0:
            raise ValueError("EEG delay S must be >= 0")
        if self.K > self.L_s:
            raise ValueError(f"K={self.K} exceeds L_s={self.L_s}")

    def validate_channels(self, C: int):
        if self.K > C * self.L_x:
            raise ValueError(f"K={self.K} exceeds C*L_x={C * self.L_x}")


class _LazyWindows(Sequence):
    """Read-only sequence that materialises one lagged window on access."""

    def __init__(self, owner: "SegmentSet", which: str):
        self._owner = owner
        self._which = which

    def __len__(self):
        return len(self._owner.starts)

    def __getitem__(self, n):
        if isinstance(n, slice):
            return [self[i] for i in range(*n.indices(len(self)))]
        if n < 0:
            n += len(self)
        if not 0 <= n < len(self):
            raise IndexError(n)
        if self._which == "X":
            return self._owner.eeg_window(n)
        return self._owner.env_window(n)


class SegmentSet:
    """Non-overlapping decision windows over a continuous recording.

    The windows are stored as start offsets into the continuous EEG and envelope
    rather than as materialised matrices; ``X[n]`` and ``S[n]`` build the
    (C*L_x) x tau and L_s x tau lagged matrices on demand. Row ``c*L_x + l`` of
    ``X[n]`` at column ``j`` holds ``x_c(t - l + S)`` with ``t = starts[n] + j``,
    and row ``l`` of ``S[n]`` holds ``s(t - l)``. Lags reaching before the first
    or after the last recorded sample read zeros.
    """

    def __init__(self, eeg: np.ndarray, env: np.ndarray, cfg: LagConfig, tau: int,
                 starts, fs: float, labels_true=None):
        eeg = np.asarray(eeg, dtype=np.float64)
        env = np.asarray(env, dtype=np.float64).reshape(-1)
        if eeg.ndim != 2 or eeg.shape[1] != env.shape[0]:
            raise ShapeMismatch("EEG and envelope must share the sample axis")
        self.cfg = cfg
        self.tau = int(tau)
        self.fs = float(fs)
        self.starts = np.asarray(starts, dtype=np.int64)
        self.n_channels, self.n_samples = eeg.shape
        cfg.validate_channels(self.n_channels)
        # column t of the lagged EEG reads eeg[:, t + S - l], l in [0, L_x)
        self.pad_x = max(0, cfg.L_x - 1 - cfg.S)
        right = cfg.S
        self._eeg_pad = np.zeros((self.n_channels, self.pad_x + self.n_samples + right))
        self._eeg_pad[:, self.pad_x:self.pad_x + self.n_samples] = eeg
        self.pad_s = cfg.L_s - 1
        self._env_pad = np.zeros((1, self.pad_s + self.n_samples))
        self._env_pad[0, self.pad_s:] = env
        for a in (self._eeg_pad, self._env_pad):
            a.setflags(write=False)
        if labels_true is not None:
            labels_true = np.asarray(labels_true, dtype=bool).ravel()
            if labels_true.shape[0] != len(self.starts):
                raise ShapeMismatch("labels_true must have one entry per window")
            labels_true.setflags(write=False)
        self.labels_true = labels_true
        self.X = _LazyWindows(self, "X")
        self.S = _LazyWindows(self, "S")
        self._stats = None

    # -- shapes -------------------------------------------------------------
    def __len__(self):
        return len(self.starts)

    @property
    def N(self) -> int:
        return len(self.starts)

    @property
    def dim_x(self) -> int:
        return self.n_channels * self.cfg.L_x

    @property
    def dim_s(self) -> int:
        return self.cfg.L_s

    @property
    def eeg_start(self) -> int:
        """Offset into the padded EEG of lag 0 at sample 0."""
        return self.pad_x + self.cfg.S

    @property
    def eeg_padded(self) -> np.ndarray:
        return self._eeg_pad

    @property
    def env_padded(self) -> np.ndarray:
        return self._env_pad

    # -- materialisation ----------------------------------------------------
    def eeg_window(self, n: int) -> np.ndarray:
        L = self.cfg.L_x
        a = int(self.starts[n]) + self.eeg_start - (L - 1)
        seg = self._eeg_pad[:, a:a + self.tau + L - 1]
        view = np.lib.stride_tricks.sliding_window_view(seg, L, axis=1)  # C x tau x L
        return view[:, :, ::-1].transpose(0, 2, 1).reshape(self.n_channels * L, self.tau)

    def env_window(self, n: int) -> np.ndarray:
        L = self.cfg.L_s
        a = int(self.starts[n]) + self.pad_s - (L - 1)
        seg = self._env_pad[0, a:a + self.tau + L - 1]
        view = np.lib.stride_tricks.sliding_window_view(seg, L)  # tau x L
        return np.ascontiguousarray(view[:, ::-1].T)

    def subset(self, idx) -> "SegmentSet":
        """Windows ``idx`` of this set, sharing the underlying recording."""
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        out = SegmentSet.__new__(SegmentSet)
        out.__dict__.update(self.__dict__)
        out.starts = self.starts[idx]
        out.labels_true = None if self.labels_true is None else self.labels_true[idx]
        out.X = _LazyWindows(out, "X")
        out.S = _LazyWindows(out, "S")
        out._stats = None if self._stats is None else self._stats.subset(idx)
        return out

    def with_labels(self, labels_true) -> "SegmentSet":
        out = self.subset(np.arange(self.N))
        labels_true = np.asarray(labels_true, dtype=bool).ravel()
        if labels_true.shape[0] != self.N:
            raise ShapeMismatch("labels_true must have one entry per window")
        out.labels_true = labels_true
        return out

    def stats(self, with_xx: bool = True):
        """Per-window second-order statistics, computed once and cached."""
        from .linalg import WindowStats, grouped_xx
        if self._stats is None:
            self._stats = WindowStats.from_segments(self, with_xx)
        elif with_xx and self._stats.xx_sum is None:
            xx = grouped_xx(self, np.zeros(self.N, dtype=np.int64), 1)[0]
            self._stats = WindowStats(self._stats.xs, self._stats.ss, xx)
        return self._stats


def window_starts(n_samples: int, tau: int, hop: Optional[int] = None) -> np.ndarray:
    hop = tau if hop is None else int(hop)
    if hop < 1:
        raise ValueError("window hop must be >= 1 sample")
    if n_samples < tau:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_samples - tau + 1, hop, dtype=np.int64)


def segment(eeg: SignalBuffer, env: SignalBuffer, cfg: LagConfig, tau: float,
            overlap: float = 0.0, attended_mask=None, labels_true=None) -> SegmentSet:
    """Cut a recording into decision windows of ``tau`` seconds.

    Windows are non-overlapping by default (``overlap`` is the fraction of a
    window shared with its predecessor) and the trailing partial window is
    dropped. ``attended_mask`` is an optional per-sample boolean trace from
    which per-window truth labels are derived by majority vote; alternatively
    pass ``labels_true`` directly.
    """
    if eeg.fs != env.fs:
        raise RateMismatch(f"EEG at {eeg.fs} Hz but envelope at {env.fs} Hz")
    if env.n_channels != 1:
        raise ShapeMismatch("envelope must be a single channel")
    if eeg.n_samples != env.n_samples:
        raise ShapeMismatch(
            f"EEG has {eeg.n_samples} samples but envelope has {env.n_samples}")
    tau_s = int(round(tau * eeg.fs))
    if tau_s < cfg.L_x + cfg.S:
        raise WindowTooShort(
            f"window of {tau_s} samples cannot fill L_x + S = {cfg.L_x + cfg.S} lags")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    hop = max(1, int(round(tau_s * (1.0 - overlap))))
    starts = window_starts(eeg.n_samples, tau_s, hop)
    if attended_mask is not None and labels_true is None:
        mask = np.asarray(attended_mask, dtype=float).ravel()
        labels_true = np.array([mask[s:s + tau_s].mean() > 0.5 for s in starts], dtype=bool)
    return SegmentSet(eeg.data, env.data[0], cfg, tau_s, starts, eeg.fs, labels_true)


# ---------------------------------------------------------------------------
# AAD1 tensor files
# ---------------------------------------------------------------------------

def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_array(arr, path) -> None:
    """Write any finite array as an AAD1 tensor (no sidecar)."""
    arr = np.asarray(arr)
    out = arr.astype("<f4")
    if not np.all(np.isfinite(out)):
        raise NonFiniteData(f"{path}: array contains non-finite values")
    header = MAGIC + struct.pack("<I", out.ndim) + struct.pack(f"<{out.ndim}I", *out.shape)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(out).tobytes(order="C"))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def read_array(path) -> np.ndarray:
    """Read an AAD1 tensor into a float32 array."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 8:
        raise TruncatedPayload(f"{path}: header truncated")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    head = 8 + 4 * ndim
    if len(raw) < head:
        raise TruncatedPayload(f"{path}: dims truncated")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    need = 4 * int(np.prod(dims, dtype=np.int64))
    if len(raw) - head != need:
        raise TruncatedPayload(
            f"{path}: payload has {len(raw) - head} bytes, dims {list(dims)} need {need}")
    return np.frombuffer(raw, dtype="<f4", offset=head).reshape(dims).astype(np.float32)


def write_tensor(buf: SignalBuffer, path) -> None:
    """Write ``buf`` as an AAD1 tensor plus its JSON sidecar.

    Samples are stored as float32, so buffers holding float64 values are rounded.
    """
    write_array(buf.data, path)
    meta = {"fs": buf.fs, "kind": buf.kind,
            "channel_names": list(buf.channel_names) if buf.channel_names else None}
    try:
        sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{sidecar_path(path)}: {exc}") from exc


def read_tensor(path) -> SignalBuffer:
    side = sidecar_path(path)
    if not side.exists():
        raise MissingSidecar(f"{path}: sidecar {side} not found")
    data = read_array(path)
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2:
        raise ShapeMismatch(f"{path}: signal tensors must be 1-D or 2-D, got {data.ndim}-D")
    meta = json.loads(side.read_text(encoding="utf-8"))
    names = meta.get("channel_names")
    return SignalBuffer(data, meta["fs"], meta.get("kind", "eeg"),
                        tuple(names) if names else None)


def read_csv(path, kind: str = "eeg") -> SignalBuffer:
    """CSV fallback: header ``t,ch1,...,chC``, one sample per row, t in seconds."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if len(rows) < 3 or rows[0][0].strip() != "t":
        raise ValueError(f"{path}: expected header 't,ch1..chC' and at least two samples")
    names = tuple(h.strip() for h in rows[0][1:])
    table = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    t = table[:, 0]
    dt = np.median(np.diff(t))
    if not dt > 0:
        raise ValueError(f"{path}: time column must be increasing")
    return SignalBuffer(table[:, 1:].T.copy(), 1.0 / dt, kind, names)


def write_csv(buf: SignalBuffer, path) -> None:
    names = buf.channel_names or tuple(f"ch{i + 1}" for i in range(buf.n_channels))
    t = np.arange(buf.n_samples) / buf.fs
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("t",) + tuple(names))
        for i in range(buf.n_samples):
            w.writerow([repr(float(t[i]))] + [repr(float(v)) for v in buf.data[:, i]])

"""Seeded experiment sweeps on synthetic recordings.

Every sweep regenerates its recordings from ``(SynthConfig, seed)`` and uses
seed-derived random streams for any label corruption or data removal, so a
report is a pure function of its arguments.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .core_io import LagConfig, SegmentSet
from .metrics import auc_fast, permutation_null_band
from .pipeline import UnsupervisedConfig, run_batch, supervised_cv_scores
from .provenance import config_hash, header_lines, to_jsonable
from .synth import SynthConfig, generate

ABLATION_RUNGS = ("supervised_cca_lda", "supervised_cca_milda", "unsupervised_hard",
                  "unsupervised_soft", "unsupervised_soft_discriminative")


@dataclass
class SweepReport:
    kind: str
    axis_name: str
    axis: list
    seeds: list
    # series name -> (len(axis), len(seeds)) AUC values
    series: Dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, v in self.series.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (len(self.axis), len(self.seeds)):
                raise ValueError(f"series {name!r} has shape {v.shape}")
            self.series[name] = v

    def mean(self, series: Optional[str] = None) -> np.ndarray:
        return self._get(series).mean(axis=1)

    def std(self, series: Optional[str] = None) -> np.ndarray:
        return self._get(series).std(axis=1)

    def median(self, series: Optional[str] = None) -> np.ndarray:
        return np.median(self._get(series), axis=1)

    def _get(self, series):
        if series is None:
            series = next(iter(self.series))
        return self.series[series]

    @property
    def config_hash(self) -> str:
        return config_hash({"kind": self.kind, "axis": self.axis, "seeds": self.seeds,
                            "metadata": self.metadata})

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in header_lines(self.config_hash):
            buf.write(line + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.axis_name, "series", "mean", "std", "median"]
                   + [f"seed_{s}" for s in self.seeds])
        for name, vals in self.series.items():
            for i, a in enumerate(self.axis):
                row = vals[i]
                w.writerow([a, name, f"{row.mean():.6f}", f"{row.std():.6f}",
                            f"{np.median(row):.6f}"] + [f"{x:.6f}" for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "kind": self.kind, "axis_name": self.axis_name, "axis": self.axis,
            "seeds": self.seeds, "config_hash": self.config_hash,
            "series": {n: {"mean": self.mean(n), "std": self.std(n), "median": self.median(n),
                           "values": v} for n, v in self.series.items()},
            "metadata": self.metadata,
        }
        return json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n"

    def write(self, stem) -> None:
        with open(f"{stem}.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(f"{stem}.json", "w", encoding="utf-8") as fh:
            fh.write(self.to_json())


def _meta(cfg, lag, tau, ucfg, **extra):
    return {"synth": cfg, "lag": lag, "tau": tau, "unsupervised": ucfg, **extra}


def _auc(scores, segs: SegmentSet) -> float:
    return auc_fast(scores, segs.labels_true)


def _rng(seed: int, *salt: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, salt)])


def corrupt_labels(truth, p_i: float, rng: np.random.Generator) -> np.ndarray:
    """Hard labels agreeing with ``truth`` on a fraction ``p_i`` of windows (chosen uniformly)."""
    truth = np.asarray(truth, dtype=bool)
    n_flip = int(round((1.0 - p_i) * truth.size))
    flip = np.zeros(truth.size, dtype=bool)
    flip[rng.choice(truth.size, n_flip, replace=False)] = True
    return truth ^ flip


def _recordings(cfg: SynthConfig, seeds, lag, tau):
    for sd in seeds:
        yield generate(cfg.replace(seed=int(sd))).segments(lag, tau)


def sweep_self_leveraging(cfg: SynthConfig, p_grid: Sequence[float], seeds: Sequence[int],
                          lag: LagConfig = LagConfig(), tau: float = 10.0,
                          ucfg: UnsupervisedConfig = UnsupervisedConfig(final_discriminative=False),
                          segments: Optional[Callable] = None) -> SweepReport:
    """AUC after one iteration and after convergence, starting from p_i-accurate labels.

    ``segments`` optionally maps a seed to a ready SegmentSet (to reuse cached data).
    """
    seeds = [int(s) for s in seeds]
    first = np.zeros((len(p_grid), len(seeds)))
    final = np.zeros_like(first)
    for j, sd in enumerate(seeds):
        segs = segments(sd) if segments else next(_recordings(cfg, [sd], lag, tau))
        for i, p_i in enumerate(p_grid):
            p0 = corrupt_labels(segs.labels_true, p_i, _rng(sd, 1, i)).astype(np.float64)
            res = run_batch(segs, _with(ucfg, init_labels="provided", p0=p0))
            first[i, j] = _auc(res.iterations[0].scores, segs)
            final[i, j] = _auc(res.scores, segs)
    return SweepReport("self_leveraging", "p_i", [float(p) for p in p_grid], seeds,
                       {"final": final, "first_iteration": first},
                       _meta(cfg, lag, tau, ucfg,
                             corruption="flip a uniformly drawn (1 - p_i) fraction of true labels"))


def _with(ucfg: UnsupervisedConfig, **kw) -> UnsupervisedConfig:
    return dataclasses.replace(ucfg, **kw)


def ablation_point(segs: SegmentSet, ucfg: UnsupervisedConfig = UnsupervisedConfig()) -> dict:
    lab = segs.labels_true
    out = {
        "supervised_cca_lda": _auc(supervised_cv_scores(segs, lab, classifier="lda",
                                                        ridge=ucfg.ridge), segs),
        "supervised_cca_milda": _auc(supervised_cv_scores(segs, lab, classifier="milda",
                                                          ridge=ucfg.ridge), segs),
    }
    hard = run_batch(segs, _with(ucfg, label_mode="hard", final_discriminative=False))
    soft = run_batch(segs, _with(ucfg, label_mode="soft", final_discriminative=False))
    disc = run_batch(segs, _with(ucfg, label_mode="soft", final_discriminative=True))
    out["unsupervised_hard"] = _auc(hard.scores, segs)
    out["unsupervised_soft"] = _auc(soft.scores, segs)
    out["unsupervised_soft_discriminative"] = _auc(disc.scores, segs)
    return out


def sweep_ablation(cfg: SynthConfig, seeds: Sequence[int], lag: LagConfig = LagConfig(),
                   tau: float = 10.0, ucfg: UnsupervisedConfig = UnsupervisedConfig(),
                   segments: Optional[Callable] = None) -> SweepReport:
    """Five rungs from supervised CCA+LDA to the full unsupervised decoder, AUC per seed."""
    seeds = [int(s) for s in seeds]
    vals = np.zeros((len(ABLATION_RUNGS), len(seeds)))
    for j, sd in enumerate(seeds):
        segs = segments(sd) if segments else next(_recordings(cfg, [sd], lag, tau))
        point = ablation_point(segs, ucfg)
        vals[:, j] = [point[r] for r in ABLATION_RUNGS]
    return SweepReport("ablation", "rung", list(ABLATION_RUNGS), seeds, {"auc": vals},
                       _meta(cfg, lag, tau, ucfg))


def sweep_window(cfg: SynthConfig, tau_grid: Sequence[float], seeds: Sequence[int],
                 lag: LagConfig = LagConfig(), ucfg: UnsupervisedConfig = UnsupervisedConfig(),
                 n_perm: int = 1000) -> SweepReport:
    """Unsupervised AUC per decision-window length, with the 95 % permutation null band."""
    seeds = [int(s) for s in seeds]
    vals = np.zeros((len(tau_grid), len(seeds)))
    lo = np.zeros_like(vals)
    hi = np.zeros_like(vals)
    for j, sd in enumerate(seeds):
        data = generate(cfg.replace(seed=sd))
        for i, tau in enumerate(tau_grid):
            segs = data.segments(lag, tau)
            res = run_batch(segs, ucfg)
            vals[i, j] = _auc(res.scores, segs)
            lo[i, j], hi[i, j] = permutation_null_band(res.scores, segs.labels_true, n_perm,
                                                       0.95, seed=sd)
    return SweepReport("window", "tau", [float(t) for t in tau_grid], seeds,
                       {"auc": vals, "null_lo": lo, "null_hi": hi},
                       _meta(cfg, lag, None, ucfg, n_perm=n_perm))


def removal_indices(truth, fraction: float, proportional: bool, rng) -> np.ndarray:
    """Indices of windows kept after removing ``fraction`` of the attended windows.

    With ``proportional`` the same fraction is removed from the unattended class too.
    """
    truth = np.asarray(truth, dtype=bool)
    keep = np.ones(truth.size, dtype=bool)
    classes = (True, False) if proportional else (True,)
    for c in classes:
        idx = np.flatnonzero(truth == c)
        n_rm = int(round(fraction * idx.size))
        keep[rng.choice(idx, n_rm, replace=False)] = False
    return np.flatnonzero(keep)


def sweep_imbalance(cfg: SynthConfig, removal_grid: Sequence[float], seeds: Sequence[int],
                    lag: LagConfig = LagConfig(), tau: float = 10.0,
                    ucfg: UnsupervisedConfig = UnsupervisedConfig(),
                    segments: Optional[Callable] = None) -> SweepReport:
    """Attended-only removal versus proportional removal from both classes."""
    seeds = [int(s) for s in seeds]
    att = np.zeros((len(removal_grid), len(seeds)))
    prop = np.zeros_like(att)
    for j, sd in enumerate(seeds):
        segs = segments(sd) if segments else next(_recordings(cfg, [sd], lag, tau))
        for i, f in enumerate(removal_grid):
            for arm, out in ((False, att), (True, prop)):
                if f == 0.0 and arm:
                    out[i, j] = att[i, j]
                    continue
                sub = segs.subset(removal_indices(segs.labels_true, f, arm, _rng(sd, 2, i)))
                out[i, j] = _auc(run_batch(sub, ucfg).scores, sub)
    return SweepReport("imbalance", "removed_fraction", [float(f) for f in removal_grid], seeds,
                       {"attended_removed": att, "proportional_removed": prop},
                       _meta(cfg, lag, tau, ucfg))

"""Command-line entry point: ``uaad <command> [flags]``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors; in the
last case one JSON object describing the error is printed on standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__, dsp
from .config import SCHEMA, RunConfig
from .core_io import (SignalBuffer, read_csv, read_tensor, segment, sidecar_path, write_array,
                      write_tensor)
from .errors import UsageError
from .metrics import metrics as compute_metrics
from .metrics import permutation_null_band
from .pipeline import OnlineState, run_batch, run_online, segment_stream, supervised_cv_scores
from .provenance import config_hash, header_lines, to_jsonable
from .sweeps import sweep_ablation, sweep_imbalance, sweep_self_leveraging, sweep_window
from .synth import generate

log = logging.getLogger("uaad")

DEFAULT_GRIDS = {
    "self_leveraging": (0.0, 0.25, 0.5, 0.75, 1.0),
    "window": (1.0, 2.0, 5.0, 10.0, 20.0, 30.0),
    "imbalance": (0.0, 0.3, 0.6, 0.9),
    "ablation": (),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _add_config_flags(p):
    g = p.add_argument_group("configuration (overrides --config)")
    for key in SCHEMA:
        g.add_argument(key.flag, dest=f"cfg_{key.name}", default=None, metavar=key.name.upper(),
                       help=f"{key.help} [{key.section}.{key.name}, default {key.default!r}]")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="uaad", description="Unsupervised auditory attention decoding")
    top.add_argument("--version", action="version", version=f"uaad {__version__}")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--out", default="uaad-out", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        _add_config_flags(p)
        return p

    p = cmd("synth", "generate a synthetic recording")
    p = cmd("preprocess", "envelope extraction and EEG band-pass/resampling")
    p.add_argument("--audio", help="mono audio tensor file")
    p.add_argument("--eeg", help="EEG tensor or CSV file")
    for name, help_ in (("decode", "batch unsupervised decoding"),
                        ("stream", "online recursive decoding"),
                        ("fit", "supervised cross-validated baseline")):
        p = cmd(name, help_)
        p.add_argument("--eeg", required=True, help="EEG tensor or CSV file")
        p.add_argument("--env", required=True, help="envelope tensor or CSV file")
        p.add_argument("--labels", required=(name == "fit"),
                       help="true window labels CSV (window,label_true)")
    p = cmd("eval", "metrics of a labels CSV against ground truth")
    p.add_argument("--scores", required=True, help="labels CSV written by decode/fit/stream")
    p.add_argument("--labels", required=True, help="true window labels CSV")
    p = cmd("sweep", "synthetic experiment sweep")
    return top


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _resolve(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    for key in SCHEMA:
        v = getattr(args, f"cfg_{key.name}", None)
        if v is not None:
            cfg.set(key.name, v)
    return cfg


def _read_signal(path, kind) -> SignalBuffer:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{p}: no such file")
    if p.suffix.lower() == ".csv":
        return read_csv(p, kind)
    return read_tensor(p)


def _copy_inputs(out: Path, paths) -> list:
    dest = out / "inputs"
    dest.mkdir(parents=True, exist_ok=True)
    copied = []
    for path in paths:
        if path is None:
            continue
        src = Path(path)
        shutil.copyfile(src, dest / src.name)
        copied.append(src.name)
        side = sidecar_path(src)
        if side.exists():
            shutil.copyfile(side, dest / side.name)
    return copied


def _write_csv(path: Path, chash: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header_lines(chash):
            fh.write(line + "\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(x) for x in r) + "\n")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.10g}"


def _read_table(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty table")
    header = lines[0].split(",")
    cols = list(zip(*[ln.split(",") for ln in lines[1:]])) or [()] * len(header)
    return {h: np.array([float(v) for v in c]) for h, c in zip(header, cols)}


def _read_truth(path, n=None) -> np.ndarray:
    t = _read_table(path)
    if "label_true" not in t:
        raise ValueError(f"{path}: needs a label_true column")
    lab = t["label_true"].astype(bool)
    if n is not None and lab.size != n:
        raise ValueError(f"{path}: {lab.size} labels for {n} windows")
    return lab


def _write_run(out: Path, command: str, cfg: RunConfig, chash: str, inputs, extra=None):
    doc = {"tool": "uaad", "version": __version__, "command": command, "config_hash": chash,
           "config": cfg.as_sections(), "inputs": inputs}
    if extra:
        doc.update(extra)
    (out / "run.json").write_text(json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n",
                                  encoding="utf-8")
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")


def _hash(command, cfg) -> str:
    return config_hash({"command": command, "config": cfg.as_sections()})


def _segments(args, cfg):
    eeg = _read_signal(args.eeg, "eeg")
    env = _read_signal(args.env, "envelope")
    if cfg["pca"]:
        eeg = dsp.apply_pca(eeg, dsp.fit_pca(eeg, cfg["pca"]))
    segs = segment(eeg, env, cfg.lag(), cfg["tau"], cfg["overlap"])
    if args.labels:
        segs = segs.with_labels(_read_truth(args.labels, segs.N))
    return segs


def _save_model(out: Path, model, chash: str, extra: dict):
    mdir = out / "model"
    mdir.mkdir(parents=True, exist_ok=True)
    write_array(model.decoders, mdir / "decoders.ten")
    write_array(model.encoders, mdir / "encoders.ten")
    write_array(model.eigenvalues[None, :], mdir / "eigenvalues.ten")
    doc = {"version": __version__, "config_hash": chash, "lag": model.cfg, "mode": model.mode,
           "ridge": model.ridge, **extra}
    (mdir / "model.json").write_text(json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n",
                                     encoding="utf-8")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig, out: Path, chash: str) -> None:
    scfg = cfg.synth()
    data = generate(scfg)
    write_tensor(data.eeg, out / "eeg.ten")
    write_tensor(data.envelope, out / "env.ten")
    lab = data.labels_true(cfg["tau"], cfg["overlap"])
    _write_csv(out / "labels.csv", chash, ["window", "label_true"],
               [(i, bool(v)) for i, v in enumerate(lab)])
    _write_run(out, "synth", cfg, chash, [])


def cmd_preprocess(args, cfg: RunConfig, out: Path, chash: str) -> None:
    if not args.audio and not args.eeg:
        raise UsageError("preprocess needs --audio and/or --eeg")
    pc = cfg.preproc()
    if args.audio:
        env = dsp.extract_envelope(_read_signal(args.audio, "audio"), pc)
        write_tensor(env, out / "env.ten")
    if args.eeg:
        eeg = dsp.remove_artifacts(_read_signal(args.eeg, "eeg"))
        eeg = dsp.bandpass_resample(eeg, pc.band_lo, pc.band_hi, pc.fs_out, pc.filter_order)
        write_tensor(eeg, out / "eeg.ten")
    _write_run(out, "preprocess", cfg, chash, _copy_inputs(out, [args.audio, args.eeg]))


def cmd_decode(args, cfg: RunConfig, out: Path, chash: str) -> None:
    segs = _segments(args, cfg)
    res = run_batch(segs, cfg.unsupervised())
    header = ["window", "score", "p_soft", "label"]
    cols = [np.arange(segs.N), res.scores, res.p_soft, res.labels]
    if segs.labels_true is not None:
        header.append("label_true")
        cols.append(segs.labels_true)
    _write_csv(out / "labels.csv", chash, header, zip(*cols))
    g = res.gmm
    _save_model(out, res.model, chash, {
        "milda": {"mean": res.milda.mean, "cov": res.milda.cov, "delta": res.milda.delta,
                  "w": res.milda.w},
        "gmm": {"mu_pos": g.mu_pos, "mu_neg": g.mu_neg, "sigma": g.sigma, "q": g.q,
                "sigma_pos": g.sigma_pos, "sigma_neg": g.sigma_neg, "tied": g.tied},
        "iterations": [{"iteration": h.iteration, "mode": h.mode,
                        "eigenvalues": h.eigenvalues, "mean_abs_dp": h.mean_abs_dp}
                       for h in res.iterations],
        "converged_at": res.converged_at,
    })
    _write_run(out, "decode", cfg, chash, _copy_inputs(out, [args.eeg, args.env, args.labels]))


def cmd_stream(args, cfg: RunConfig, out: Path, chash: str) -> None:
    segs = _segments(args, cfg)
    state = OnlineState(segs.cfg, segs.n_channels, alpha=cfg["alpha"], U=cfg["refit_period"],
                        ridge=cfg["ridge"])
    rows = []
    for o in run_online(segment_stream(segs), state):
        row = [o.index, o.score, o.p, o.label, o.provisional]
        if segs.labels_true is not None:
            row.append(segs.labels_true[o.index])
        rows.append(row)
    header = ["window", "score", "p_soft", "label", "provisional"]
    if segs.labels_true is not None:
        header.append("label_true")
    _write_csv(out / "labels.csv", chash, header, rows)
    if state.model is not None:
        _save_model(out, state.model, chash, {"alpha": state.alpha, "refit_period": state.U,
                                       "n_refits": state.n_refits})
    _write_run(out, "stream", cfg, chash, _copy_inputs(out, [args.eeg, args.env, args.labels]))


def cmd_fit(args, cfg: RunConfig, out: Path, chash: str) -> None:
    segs = _segments(args, cfg)
    y = supervised_cv_scores(segs, segs.labels_true, mode=cfg["mode"],
                             classifier=cfg["classifier"], n_folds=cfg["folds"],
                             ridge=cfg["ridge"])
    _write_csv(out / "labels.csv", chash, ["window", "score", "label_true"],
               zip(np.arange(segs.N), y, segs.labels_true))
    m = compute_metrics(y, segs.labels_true, threshold=float(np.median(y)))
    _write_run(out, "fit", cfg, chash, _copy_inputs(out, [args.eeg, args.env, args.labels]),
               {"auc": m["auc"]})


def cmd_eval(args, cfg: RunConfig, out: Path, chash: str) -> None:
    t = _read_table(args.scores)
    truth = _read_truth(args.labels, len(t["score"]))
    pred = t["label"].astype(bool) if "label" in t else None
    m = compute_metrics(t["score"], truth, predicted=pred,
                        threshold=float(np.median(t["score"])))
    doc = {"accuracy": m["accuracy"], "f1": m["f1"], "auc": m["auc"], "n_windows": truth.size}
    if m["roc"] is not None:
        doc["null_band_95"] = permutation_null_band(t["score"], truth, cfg["n_perm"], 0.95, 0)
        _write_csv(out / "roc.csv", chash, ["threshold", "fpr", "tpr"],
                   zip(m["roc"].thresholds, m["roc"].fpr, m["roc"].tpr))
    (out / "metrics.json").write_text(
        json.dumps(to_jsonable({"config_hash": chash, "version": __version__, **doc}),
                   sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_run(out, "eval", cfg, chash, _copy_inputs(out, [args.scores, args.labels]))


def cmd_sweep(args, cfg: RunConfig, out: Path, chash: str) -> None:
    kind = cfg["kind"]
    if kind not in DEFAULT_GRIDS:
        raise UsageError(f"--kind must be one of {', '.join(DEFAULT_GRIDS)}")
    grid = cfg["grid"] or DEFAULT_GRIDS[kind]
    seeds = list(range(cfg["seeds"]))
    if not seeds:
        raise UsageError("--seeds must be >= 1")
    scfg, lag, ucfg = cfg.synth(), cfg.lag(), cfg.unsupervised()
    if kind == "self_leveraging":
        rep = sweep_self_leveraging(scfg, grid, seeds, lag, cfg["tau"])
    elif kind == "ablation":
        rep = sweep_ablation(scfg, seeds, lag, cfg["tau"], ucfg)
    elif kind == "window":
        rep = sweep_window(scfg, grid, seeds, lag, ucfg, cfg["n_perm"])
    else:
        rep = sweep_imbalance(scfg, grid, seeds, lag, cfg["tau"], ucfg)
    rep.write(out / f"sweep_{kind}")
    _write_run(out, "sweep", cfg, chash, [])


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "decode": cmd_decode,
            "stream": cmd_stream, "fit": cmd_fit, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        chash = _hash(args.command, cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out, chash)
    except UsageError as exc:
        print(f"uaad {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "command": args.command}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

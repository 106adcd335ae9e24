"""INI run configuration: one schema, mirrored one-to-one by command-line flags."""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Any, Callable, Dict, Tuple

from .core_io import LagConfig
from .dsp import PreprocConfig
from .errors import UsageError
from .pipeline import UnsupervisedConfig
from .synth import SynthConfig


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s) -> tuple:
    if isinstance(s, (tuple, list)):
        return tuple(float(x) for x in s)
    return tuple(float(x) for x in str(s).split(",") if x.strip())


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    parse: Callable
    default: Any
    help: str

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


SCHEMA: Tuple[Key, ...] = (
    Key("lag", "l_x", int, 17, "EEG lags (samples)"),
    Key("lag", "l_s", int, 17, "envelope lags (samples)"),
    Key("lag", "delay", int, 13, "EEG delay S relative to the envelope (samples)"),
    Key("lag", "k", int, 2, "number of CCA components"),
    Key("window", "tau", float, 10.0, "decision window length (s)"),
    Key("window", "overlap", float, 0.0, "fraction of overlap between windows"),
    Key("preproc", "n_bands", int, 15, "envelope subbands"),
    Key("preproc", "power_exponent", float, 0.6, "subband power-law exponent"),
    Key("preproc", "band_lo", float, 0.5, "band-pass lower edge (Hz)"),
    Key("preproc", "band_hi", float, 32.0, "band-pass upper edge (Hz)"),
    Key("preproc", "fs_out", float, 64.0, "output sampling rate (Hz)"),
    Key("preproc", "filter_order", int, 4, "IIR filter order"),
    Key("preproc", "lowpass", float, 32.0, "subband envelope low-pass cutoff (Hz)"),
    Key("preproc", "pca", int, 0, "PCA components for EEG (0 keeps all channels)"),
    Key("decode", "i_max", int, 10, "maximum self-training iterations"),
    Key("decode", "ridge", float, 1e-6, "relative ridge on R_xx and R_ss"),
    Key("decode", "init_labels", str, "uniform_half", "uniform_half | random"),
    Key("decode", "final_discriminative", _bool, True, "discriminative last iteration"),
    Key("decode", "label_mode", str, "soft", "soft | hard"),
    Key("decode", "early_stop", _bool, True, "stop once labels settle"),
    Key("decode", "tol", float, 0.01, "mean |dp| convergence threshold"),
    Key("decode", "gmm_tied", _bool, True, "shared GMM variance"),
    Key("decode", "init_seed", int, 0, "seed for random initial labels"),
    Key("decode", "classifier", str, "lda", "supervised classifier: lda | milda"),
    Key("decode", "mode", str, "normal", "supervised CCA mode: normal | discriminative"),
    Key("decode", "folds", int, 10, "cross-validation folds for supervised fits"),
    Key("online", "alpha", float, 0.99, "forgetting factor"),
    Key("online", "refit_period", int, 10, "segments between filter refits"),
    Key("synth", "channels", int, 24, "EEG channels"),
    Key("synth", "fs", float, 64.0, "sampling rate (Hz)"),
    Key("synth", "duration", float, 600.0, "recording length (s)"),
    Key("synth", "l_mix", int, 16, "forward-model kernel taps"),
    Key("synth", "hearing_ratio", float, 0.3, "hearing response norm relative to attention"),
    Key("synth", "noise_power", float, 1.0, "noise power relative to the attention response"),
    Key("synth", "alpha_pos", float, 1.0, "attention gain in attended spans"),
    Key("synth", "alpha_neg", float, 0.0, "attention gain in unattended spans"),
    Key("synth", "block", float, 60.0, "attention block length (s)"),
    Key("synth", "drift", float, 0.0, "slow attention drift amplitude"),
    Key("synth", "seed", int, 0, "recording seed"),
    Key("sweep", "kind", str, "window", "self_leveraging | ablation | window | imbalance"),
    Key("sweep", "grid", _floats, (), "comma-separated sweep values"),
    Key("sweep", "seeds", int, 10, "number of seeds (0 .. seeds-1)"),
    Key("sweep", "n_perm", int, 1000, "permutations for the null band"),
    Key("run", "jobs", int, 1, "worker cap (runs are serial)"),
)

BY_NAME: Dict[str, Key] = {k.name: k for k in SCHEMA}


class RunConfig:
    """Resolved settings: defaults, then the INI file, then explicit flags."""

    def __init__(self, values: Dict[str, Any] = None):
        self.values = {k.name: k.default for k in SCHEMA}
        if values:
            for name, v in values.items():
                self.set(name, v)

    def set(self, name: str, raw) -> None:
        key = BY_NAME.get(name)
        if key is None:
            raise UsageError(f"unknown config key {name!r}")
        try:
            self.values[name] = key.parse(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{key.flag}: {exc}") from exc

    def __getitem__(self, name):
        return self.values[name]

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
        cfg = cls()
        for section in cp.sections():
            for name, raw in cp.items(section):
                key = BY_NAME.get(name)
                if key is None or key.section != section:
                    raise UsageError(f"unknown config key [{section}] {name} in {path}")
                cfg.set(name, raw)
        return cfg

    def as_sections(self) -> Dict[str, Dict[str, Any]]:
        out: Dict[str, Dict[str, Any]] = {}
        for k in SCHEMA:
            out.setdefault(k.section, {})[k.name] = self.values[k.name]
        return out

    def to_ini(self) -> str:
        lines = []
        for section, items in self.as_sections().items():
            lines.append(f"[{section}]")
            for name, v in items.items():
                if isinstance(v, tuple):
                    v = ",".join(repr(x) for x in v)
                lines.append(f"{name} = {v}")
            lines.append("")
        return "\n".join(lines)

    # -- typed views -------------------------------------------------------
    def lag(self) -> LagConfig:
        return LagConfig(L_x=self["l_x"], L_s=self["l_s"], S=self["delay"], K=self["k"])

    def preproc(self) -> PreprocConfig:
        return PreprocConfig(self["n_bands"], self["power_exponent"], self["band_lo"],
                             self["band_hi"], self["fs_out"], self["filter_order"],
                             self["lowpass"])

    def unsupervised(self) -> UnsupervisedConfig:
        if self["init_labels"] not in ("uniform_half", "random"):
            raise UsageError("--init-labels must be uniform_half or random")
        return UnsupervisedConfig(i_max=self["i_max"], ridge=self["ridge"],
                                  init_labels=self["init_labels"],
                                  final_discriminative=self["final_discriminative"],
                                  label_mode=self["label_mode"], early_stop=self["early_stop"],
                                  tol=self["tol"], gmm_tied=self["gmm_tied"],
                                  seed=self["init_seed"])

    def synth(self) -> SynthConfig:
        return SynthConfig(C=self["channels"], fs=self["fs"], duration=self["duration"],
                           L_mix=self["l_mix"], hearing_ratio=self["hearing_ratio"],
                           noise_power=self["noise_power"], alpha_pos=self["alpha_pos"],
                           alpha_neg=self["alpha_neg"], block=self["block"],
                           drift=self["drift"], seed=self["seed"])

"""Experiment configuration in sectioned ``key = value`` text (INI) form.

Every section mirrors one module's settings.  Unknown sections and keys are
rejected, and :meth:`ExperimentConfig.to_text` writes every value explicitly,
so the text form round-trips losslessly and doubles as the config echo that
is written next to every output.

Sweep variants are extra sections named ``variant.<name>`` whose keys are
dotted overrides, e.g. ``loss.gamma = 0.05``.
"""
from __future__ import annotations

import configparser
import copy
from pathlib import Path

from ..errors import ConfigurationError

TASKS = ("speech_sep", "singing_sep", "denoise")


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    text = str(text).strip()
    return tuple(int(v) for v in text.split(",")) if text else ()


def _float_list(text):
    text = str(text).strip()
    return tuple(float(v) for v in text.split(",")) if text else ()


def _opt_int(text):
    text = str(text).strip()
    return None if text in ("", "none") else int(text)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# section -> key -> (parser, default)
SCHEMA = {
    "experiment": {
        "name": (str, "experiment"),
        "task": (str, "speech_sep"),
        "seed": (int, 0),
    },
    "data": {
        "generator": (str, "disjoint_band_noise"),
        "clip_len": (float, 2.0),
        "n_train": (int, 8),
        "n_dev": (int, 1),
        "n_test": (int, 2),
        "level_spread_db": (float, 0.0),
        "sample_rate": (int, 16000),
        "snr_db": (float, 0.0),
        "shift_step": (int, 0),
        "source1_dir": (str, ""),
        "source2_dir": (str, ""),
        "channel1": (_opt_int, None),
        "channel2": (_opt_int, None),
    },
    "features": {
        "kind": (str, "spectra"),
        "context_frames": (int, 1),
        "n_mels": (int, 40),
        "fft_size": (int, 1024),
        "hop": (int, 512),
        "window": (str, "hann"),
    },
    "model": {
        "architecture": (str, "dnn"),
        "hidden": (_int_list, (300, 300)),
    },
    "loss": {
        "gamma": (float, 0.0),
        "joint": (_bool, True),
    },
    "optimizer": {
        "max_iterations": (int, 300),
        "history_size": (int, 20),
        "minibatch_sequences": (int, 0),
        "iterations_per_batch": (int, 10),
        "convergence_tol": (float, 1e-9),
        "patience": (int, 10),
        "max_seq_len": (int, 100),
    },
    "nmf": {
        "n_basis": (int, 20),
        "train_iterations": (int, 200),
        "separate_iterations": (int, 100),
    },
    "sweep": {
        "baselines": (str, ""),
        "test_snrs": (_float_list, ()),
        "heldout_generator": (str, ""),
    },
}

VARIANT_PREFIX = "variant."


class ExperimentConfig:
    """Fully resolved settings: ``cfg.section[key]`` plus ordered sweep variants."""

    def __init__(self, values=None, variants=None):
        self.values = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
        for section, kv in (values or {}).items():
            for key, v in kv.items():
                self.set(section, key, v)
        self.variants = {}
        for name, overrides in (variants or {}).items():
            self.add_variant(name, overrides)

    # -- access --------------------------------------------------------
    def __getitem__(self, section):
        return self.values[section]

    def set(self, section, key, value):
        if section not in SCHEMA:
            raise ConfigurationError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
        parser = SCHEMA[section][key][0]
        if isinstance(value, str) and parser is not str:
            try:
                value = parser(value)
            except ValueError as exc:
                raise ConfigurationError(f"[{section}] {key}: {exc}") from None
        elif isinstance(value, list):
            value = tuple(value)
        elif parser in (int, float) and not isinstance(value, bool):
            value = parser(value)
        self.values[section][key] = value

    def add_variant(self, name, overrides):
        if not name:
            raise ConfigurationError("variant name must be non-empty")
        checked = {}
        for dotted, v in overrides.items():
            section, _, key = dotted.partition(".")
            probe = ExperimentConfig()
            probe.set(section, key, v)  # validates the key and value
            checked[dotted] = probe.values[section][key]
        self.variants[name] = checked

    def with_overrides(self, overrides) -> "ExperimentConfig":
        out = ExperimentConfig()
        out.values = copy.deepcopy(self.values)
        for dotted, v in overrides.items():
            section, _, key = dotted.partition(".")
            out.set(section, key, v)
        return out

    def resolved_variants(self):
        """``[(name, config)]``; a config without variants is its own single variant."""
        if not self.variants:
            return [(self["experiment"]["name"], self)]
        return [(n, self.with_overrides(o)) for n, o in self.variants.items()]

    def __eq__(self, other):
        return (isinstance(other, ExperimentConfig) and self.values == other.values
                and self.variants == other.variants)

    # -- text form -----------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {_fmt(self.values[section][k])}" for k in keys)
            lines.append("")
        for name, overrides in self.variants.items():
            lines.append(f"[{VARIANT_PREFIX}{name}]")
            lines.extend(f"{k} = {_fmt(v)}" for k, v in overrides.items())
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                           inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config: {exc}") from None
        cfg = cls()
        for section in parser.sections():
            if section.startswith(VARIANT_PREFIX):
                cfg.add_variant(section[len(VARIANT_PREFIX):], dict(parser[section]))
                continue
            for key, value in parser[section].items():
                cfg.set(section, key, value)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.is_file():
            raise ConfigurationError(f"config file not found: {p}")
        return cls.from_text(p.read_text(encoding="utf-8"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    # -- validation ----------------------------------------------------
    def validate(self, need_paths=True) -> list:
        """Every problem found, as messages; an empty list means the config is usable."""
        from .corpus import SyntheticCorpusSpec

        problems = []
        for name, cfg in self.resolved_variants():
            tag = f"variant {name!r}: " if self.variants else ""
            checks = [
                lambda: cfg.feature_config().stft,
                lambda: cfg.loss_config(),
                lambda: cfg.optimizer_config(),
                lambda: cfg.architecture(),
            ]
            if cfg["experiment"]["task"] not in TASKS:
                problems.append(f"{tag}[experiment] task must be one of {TASKS}")
            if cfg["features"]["kind"] not in ("spectra", "logmel_deltas"):
                problems.append(f"{tag}[features] kind must be spectra or logmel_deltas")
            if cfg["features"]["context_frames"] < 1 or cfg["features"]["context_frames"] % 2 == 0:
                problems.append(f"{tag}[features] context_frames must be a positive odd number")
            if cfg["features"]["kind"] == "logmel_deltas":
                n_bins = cfg["features"]["fft_size"] // 2 + 1
                if cfg["features"]["n_mels"] > n_bins:
                    problems.append(f"{tag}[features] n_mels={cfg['features']['n_mels']} exceeds {n_bins} bins")
            if cfg["optimizer"]["max_seq_len"] < 1:
                problems.append(f"{tag}[optimizer] max_seq_len must be >= 1")
            if cfg["nmf"]["n_basis"] < 1:
                problems.append(f"{tag}[nmf] n_basis must be >= 1")
            if cfg["data"]["shift_step"] < 0:
                problems.append(f"{tag}[data] shift_step must be >= 0")
            if not cfg.uses_directories:
                checks.append(lambda: cfg.corpus_spec())
            elif need_paths:
                for key in ("source1_dir", "source2_dir"):
                    if not Path(cfg["data"][key]).is_dir():
                        problems.append(f"{tag}[data] {key} does not exist: {cfg['data'][key]}")
            held = cfg["sweep"]["heldout_generator"]
            if held:
                checks.append(lambda: SyntheticCorpusSpec(held))
            for b in filter(None, cfg["sweep"]["baselines"].split(",")):
                if b.strip() not in ("nmf", "irm"):
                    problems.append(f"{tag}[sweep] unknown baseline {b.strip()!r} (nmf, irm)")
            for check in checks:
                try:
                    check()
                except (ConfigurationError, ValueError) as exc:
                    problems.append(f"{tag}{exc}")
        return problems

    # -- typed views ---------------------------------------------------
    @property
    def uses_directories(self) -> bool:
        return bool(self["data"]["source1_dir"] or self["data"]["source2_dir"])

    def feature_config(self):
        from .pipeline import FeatureConfig

        f = self["features"]
        return FeatureConfig(f["kind"], f["context_frames"], f["n_mels"], f["fft_size"], f["hop"], f["window"])

    def architecture(self):
        from ..model import Architecture

        fc = self.feature_config()
        return Architecture.named(self["model"]["architecture"], fc.input_dim(),
                                  list(self["model"]["hidden"]), fc.stft.n_bins)

    def loss_config(self):
        from ..training.losses import LossConfig

        return LossConfig(self["loss"]["gamma"], self["loss"]["joint"])

    def optimizer_config(self):
        from ..training.trainer import OptimizerConfig

        o = self["optimizer"]
        return OptimizerConfig(
            max_iterations=o["max_iterations"],
            history_size=o["history_size"],
            minibatch_sequences=o["minibatch_sequences"],
            iterations_per_batch=o["iterations_per_batch"],
            seed=self["experiment"]["seed"],
            convergence_tol=o["convergence_tol"],
            patience=o["patience"],
        )

    def corpus_spec(self, generator=None, seed_offset=0):
        from .corpus import SyntheticCorpusSpec

        d = self["data"]
        return SyntheticCorpusSpec(
            generator or d["generator"], d["clip_len"], d["n_train"], d["n_dev"], d["n_test"],
            self["experiment"]["seed"] + seed_offset, d["sample_rate"], d["level_spread_db"],
        )

"""Experiment orchestration: corpus materialisation, training, separation, scoring, sweeps.

Everything here works on files, so the CLI subcommands are thin wrappers and
a sweep is literally ``mix`` followed by ``train``/``separate``/``evaluate``
per variant.  Corpus audio is stored as float64 WAV so mixtures re-add to
their sources bit-exactly.
"""
from __future__ import annotations

import logging
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..evaluation import PER_CLIP_FIELDS, SUMMARY_FIELDS, global_scores, weighted_mean, write_csv
from ..model import MODEL_MAGIC, init_model, load_model, save_model
from ..nmf import NMF_MAGIC, load_bases, save_bases
from ..signal import read_wav, write_wav
from ..training.trainer import train, write_log_csv
from .config import ExperimentConfig
from .corpus import (
    directory_pairs,
    file_sha256,
    read_manifest,
    split_pairs,
    synthetic_splits,
    write_manifest,
)
from .pipeline import (
    FeatureConfig,
    batch_from_examples,
    ideal_ratio_separation,
    make_example,
    mix_pairs,
    score_estimates,
    separate_drnn,
    separate_nmf,
    train_nmf_bases,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
CONFIG_NAME = "config.ini"
SWEEP_CLIP_FIELDS = ("model", "condition") + PER_CLIP_FIELDS
SWEEP_SUMMARY_FIELDS = SUMMARY_FIELDS + ("n_clips", "status", "manifest_sha256")
HELDOUT_SEED_OFFSET = 1000
MATCHED = "matched"
UNSEEN = "unseen"


def _split_dir(split: str) -> str:
    return split.replace(":", "_").replace("=", "").replace("+", "p").replace("-", "m")


def snr_condition(snr_db: float) -> str:
    return f"snr={snr_db:+g}"


def condition_of(split: str) -> str:
    """Summary label of a manifest split (``test`` is the matched condition)."""
    if split == "test":
        return MATCHED
    if split.startswith("test:unseen"):
        return UNSEEN
    if split.startswith("test:"):
        return split[len("test:"):]
    return split


def source_pairs(cfg: ExperimentConfig):
    """Train/dev/test source pairs from the configured generator or directories."""
    d = cfg["data"]
    if cfg.uses_directories:
        pairs = directory_pairs(d["source1_dir"], d["source2_dir"], d["sample_rate"],
                                (d["channel1"], d["channel2"]))
        return split_pairs(pairs, cfg["experiment"]["seed"])
    return synthetic_splits(cfg.corpus_spec())


def build_corpus(cfg: ExperimentConfig, out_dir, with_conditions: bool = False) -> Path:
    """Write mixture/source WAV triples plus ``manifest.csv``; returns the manifest path.

    ``with_conditions`` adds the sweep test conditions: the test pairs re-mixed
    at each ``sweep.test_snrs`` value and a test split drawn from
    ``sweep.heldout_generator``.
    """
    out = Path(out_dir)
    manifest = out / MANIFEST_NAME
    if manifest.exists():
        raise FileExistsError(f"manifest already exists: {manifest}")
    d = cfg["data"]
    splits = source_pairs(cfg)
    jobs = []  # (split, pairs, snr, shift)
    for split in ("train", "dev", "test"):
        jobs.append((split, splits[split], d["snr_db"], d["shift_step"] if split == "train" else 0))
    if with_conditions:
        for snr in cfg["sweep"]["test_snrs"]:
            jobs.append((f"test:{snr_condition(snr)}", splits["test"], snr, 0))
        held = cfg["sweep"]["heldout_generator"]
        if held:
            extra = synthetic_splits(cfg.corpus_spec(held, HELDOUT_SEED_OFFSET))["test"]
            jobs.append((f"test:unseen={held}", extra, d["snr_db"], 0))
    rows = []
    for split, pairs, snr, shift in jobs:
        sub = out / _split_dir(split)
        sub.mkdir(parents=True, exist_ok=True)
        gens = {p.clip_id: p.generator for p in pairs}
        for cid, k, m, a, b in mix_pairs(pairs, snr, shift):
            base = cid.rsplit("_s", 1)[0] if shift else cid
            files = {}
            for tag, clip in (("mixture", m), ("source1", a), ("source2", b)):
                path = sub / f"{cid}_{tag}.wav"
                write_wav(path, clip, subtype="float64")
                files[tag] = path
            rows.append({
                "clip_id": cid,
                "split": split,
                "generator": gens.get(base, ""),
                "snr_db": f"{snr:g}",
                "shift": k,
                **{tag: path.relative_to(out).as_posix() for tag, path in files.items()},
                **{f"sha256_{tag}": file_sha256(path) for tag, path in files.items()},
            })
    write_manifest(manifest, rows)
    return manifest


@dataclass
class ClipTriple:
    clip_id: str
    mixture: object
    s1: object
    s2: object


def manifest_splits(manifest) -> list:
    seen = []
    for r in read_manifest(manifest):
        if r["split"] not in seen:
            seen.append(r["split"])
    return seen


def load_split(manifest, split: str, sample_rate: int = 16000, verify: bool = True) -> list:
    """Read the WAV triples of one manifest split, checking the recorded hashes."""
    manifest = Path(manifest)
    if not manifest.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest}")
    root = manifest.parent
    out = []
    for r in read_manifest(manifest):
        if r["split"] != split:
            continue
        clips = []
        for tag in ("mixture", "source1", "source2"):
            path = root / r[tag]
            if verify and file_sha256(path) != r[f"sha256_{tag}"]:
                raise ConfigurationError(f"hash mismatch for {path}")
            clips.append(read_wav(path, None, sample_rate))
        out.append(ClipTriple(r["clip_id"], *clips))
    return out


def _examples(triples, fcfg):
    return [make_example(t.clip_id, t.mixture, t.s1, t.s2, fcfg) for t in triples]


def _model_meta(cfg):
    meta = cfg.feature_config().as_meta()
    meta["sample_rate"] = cfg["data"]["sample_rate"]
    return meta


def train_from_manifest(cfg: ExperimentConfig, manifest, out_dir, log_name="train_log.csv"):
    """Train the configured network; writes ``model.drnn`` and the training log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fcfg = cfg.feature_config()
    sr = cfg["data"]["sample_rate"]
    max_len = cfg["optimizer"]["max_seq_len"]
    train_set = batch_from_examples(_examples(load_split(manifest, "train", sr), fcfg), max_len)
    if len(train_set) == 0:
        raise ConfigurationError("manifest has no training clips")
    dev_triples = load_split(manifest, "dev", sr)
    dev_set = batch_from_examples(_examples(dev_triples, fcfg), max_len) if dev_triples else None
    model = init_model(cfg.architecture(), cfg["experiment"]["seed"], _model_meta(cfg))
    result = train(model, train_set, cfg.loss_config(), cfg.optimizer_config(), dev_set)
    save_model(result.model, out / "model.drnn")
    write_log_csv(result.log, out / log_name)
    return result


def train_nmf_from_manifest(cfg: ExperimentConfig, manifest, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fcfg = cfg.feature_config()
    ex = _examples(load_split(manifest, "train", cfg["data"]["sample_rate"]), fcfg)
    n = cfg["nmf"]
    bases = train_nmf_bases(ex, n["n_basis"], n["train_iterations"], cfg["experiment"]["seed"])
    meta = _model_meta(cfg)
    meta["separate_iterations"] = n["separate_iterations"]
    save_bases(out / "bases.nmf", list(bases), meta)
    return bases


def load_separator(path):
    """Return ``separate(mixture) -> (est1, est2)`` for a model or NMF basis file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic == NMF_MAGIC:
        bases, meta = load_bases(path)
        fcfg = FeatureConfig.from_meta(meta)
        iters = int(meta.get("separate_iterations", 100))
        return (lambda mix: separate_nmf(bases, mix, fcfg, iters)), meta
    if magic == MODEL_MAGIC:
        model = load_model(path)
        fcfg = FeatureConfig.from_meta(model.meta)
        return (lambda mix: separate_drnn(model, mix, fcfg)), model.meta
    raise ConfigurationError(f"{path} is neither a model nor an NMF basis file")


def _check_compatible(meta, clip):
    sr = int(meta.get("sample_rate", clip.sample_rate))
    if clip.sample_rate != sr:
        raise ConfigurationError(f"mixture sample rate {clip.sample_rate} Hz does not match model ({sr} Hz)")


def estimate_paths(est_dir, clip_id):
    d = Path(est_dir)
    return d / f"{clip_id}_est1.wav", d / f"{clip_id}_est2.wav"


def separate_files(model_path, mixtures, out_dir):
    """Separate ``[(clip_id, AudioClip)]``; writes ``<clip_id>_est{1,2}.wav``."""
    sep, meta = load_separator(model_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for cid, mix in mixtures:
        _check_compatible(meta, mix)
        e1, e2 = sep(mix)
        p1, p2 = estimate_paths(out, cid)
        write_wav(p1, e1)
        write_wav(p2, e2)
        written.append((p1, p2))
    return written


def score_split(triples, est_dir, model_name="model", condition=MATCHED):
    """Per-clip rows for estimates already on disk; every missing file is reported."""
    missing = [str(p) for t in triples for p in estimate_paths(est_dir, t.clip_id) if not p.is_file()]
    if missing:
        raise FileNotFoundError("missing estimate files:\n  " + "\n  ".join(missing))
    rows = []
    for t in triples:
        ests = [read_wav(p, None, None) for p in estimate_paths(est_dir, t.clip_id)]
        rows.extend(_label(score_estimates(t.clip_id, ests, t.s1, t.s2, t.mixture), model_name, condition))
    return rows


def _label(rows, model_name, condition):
    for r in rows:
        r["model"] = model_name
        r["condition"] = condition
    return rows


def summarize(rows, extra=None) -> list:
    """One summary row per (model, condition, source), in first-seen order."""
    groups = {}
    for r in rows:
        groups.setdefault((r["model"], r["condition"], r["source"]), []).append(r)
    out = []
    for (model, cond, src), grp in groups.items():
        g = global_scores([(r["nsdr"], r["sir"], r["sar"], r["len_samples"]) for r in grp])
        row = {
            "model": model,
            "condition": cond,
            "source": src,
            "GNSDR": g.gnsdr,
            "GSIR": g.gsir,
            "GSAR": g.gsar,
            "GSDR": weighted_mean([r["sdr"] for r in grp], [r["len_samples"] for r in grp]),
            "STOI": "",
            "n_clips": len(grp),
            "status": "ok",
        }
        row.update(extra or {})
        out.append(row)
    return out


def manifest_hash(manifest) -> str:
    return file_sha256(manifest)


def run_sweep(cfg: ExperimentConfig, out_dir) -> dict:
    """Train and score every variant (plus baselines) on one shared corpus.

    Writes ``corpus/``, one directory per variant, ``per_clip.csv``,
    ``summary.csv`` and the config echo.  A failing variant is recorded with
    its error in the summary and the sweep moves on.  Returns
    ``{"summary": rows, "failed": [names]}``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / CONFIG_NAME)
    manifest = build_corpus(cfg, out / "corpus", with_conditions=True)
    mhash = manifest_hash(manifest)
    sr = cfg["data"]["sample_rate"]
    test_splits = [s for s in manifest_splits(manifest) if s == "test" or s.startswith("test:")]
    triples = {s: load_split(manifest, s, sr) for s in test_splits}

    per_clip, summary, failed = [], [], []

    def evaluate(name, separate):
        rows = []
        for split in test_splits:
            cond = condition_of(split)
            for t in triples[split]:
                ests = separate(t)
                rows.extend(_label(score_estimates(t.clip_id, ests, t.s1, t.s2, t.mixture), name, cond))
        return rows

    variants = cfg.resolved_variants()
    for name, vcfg in variants:
        vdir = out / name
        try:
            problems = vcfg.validate(need_paths=False)
            if problems:
                raise ConfigurationError("; ".join(problems))
            result = train_from_manifest(vcfg, manifest, vdir)
            fcfg = vcfg.feature_config()
            rows = evaluate(name, lambda t: separate_drnn(result.model, t.mixture, fcfg))
        except Exception as exc:  # isolate the variant, keep sweeping
            log.error("variant %s failed: %s", name, exc)
            log.debug("%s", traceback.format_exc())
            failed.append(name)
            summary.append({"model": name, "condition": "", "source": "",
                            "status": f"failed: {type(exc).__name__}: {exc}", "manifest_sha256": mhash})
            continue
        per_clip.extend(rows)
        summary.extend(summarize(rows, {"manifest_sha256": mhash}))

    base_cfg = variants[0][1]
    for baseline in filter(None, (b.strip() for b in cfg["sweep"]["baselines"].split(","))):
        try:
            if baseline == "nmf":
                bases = train_nmf_from_manifest(base_cfg, manifest, out / "nmf")
                fcfg = base_cfg.feature_config()
                iters = base_cfg["nmf"]["separate_iterations"]
                rows = evaluate("nmf", lambda t: separate_nmf(bases, t.mixture, fcfg, iters))
            elif baseline == "irm":
                fcfg = base_cfg.feature_config()
                rows = evaluate("irm", lambda t: ideal_ratio_separation(
                    make_example(t.clip_id, t.mixture, t.s1, t.s2, fcfg)))
            else:
                raise ConfigurationError(f"unknown baseline {baseline!r}")
        except Exception as exc:
            log.error("baseline %s failed: %s", baseline, exc)
            failed.append(baseline)
            summary.append({"model": baseline, "status": f"failed: {type(exc).__name__}: {exc}",
                            "manifest_sha256": mhash})
            continue
        per_clip.extend(rows)
        summary.extend(summarize(rows, {"manifest_sha256": mhash}))

    write_csv(out / "per_clip.csv", per_clip, SWEEP_CLIP_FIELDS)
    write_csv(out / "summary.csv", summary, SWEEP_SUMMARY_FIELDS)
    return {"summary": summary, "per_clip": per_clip, "failed": failed, "manifest": manifest}


def mean_sdr(rows, model, condition) -> float:
    vals = [r["sdr"] for r in rows if r["model"] == model and r["condition"] == condition]
    return float(np.mean(vals)) if vals else float("nan")

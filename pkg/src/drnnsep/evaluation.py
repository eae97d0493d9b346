"""BSS-EVAL style energy ratios (zero-lag projection variant), NSDR and global scores.

The estimate is split into three orthogonal parts:

* ``s_target`` -- projection onto the target source,
* ``e_interf`` -- projection onto span(all sources) minus ``s_target``,
* ``e_artif``  -- the residual.

Unlike the reference toolbox no 512-tap distortion filter is allowed, so
absolute dB values differ slightly from published tables; orderings do not.
Ratios are clipped to +-200 dB (an exactly zero error term gives +200).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError

CAP_DB = 200.0

PER_CLIP_FIELDS = ("clip_id", "source", "sdr", "sir", "sar", "nsdr", "len_samples")
SUMMARY_FIELDS = ("model", "condition", "source", "GNSDR", "GSIR", "GSAR", "GSDR", "STOI")


@dataclass(frozen=True)
class SeparationScores:
    sdr: float
    sir: float
    sar: float
    clip_len: int


@dataclass(frozen=True)
class GlobalScores:
    gnsdr: float
    gsir: float
    gsar: float


def _samples(x):
    return np.asarray(getattr(x, "samples", x), dtype=np.float64).reshape(-1)


def ratio_db(num: float, den: float) -> float:
    """10 log10(num / den) clipped to [-200, 200] dB."""
    if den <= 0.0:
        return CAP_DB if num > 0 else 0.0
    if num <= 0.0:
        return -CAP_DB
    return float(min(CAP_DB, max(-CAP_DB, 10.0 * math.log10(num / den))))


def decompose(estimate, sources, target_index: int = 0):
    """Return ``(s_target, e_interf, e_artif)`` for ``estimate``."""
    est = _samples(estimate)
    refs = np.stack([_samples(s) for s in sources])
    if refs.shape[1] != est.shape[0]:
        raise DimensionError(f"estimate has {est.shape[0]} samples, sources have {refs.shape[1]}")
    target = refs[target_index]
    energy = float(target @ target)
    if energy == 0.0:
        raise DegenerateInputError("target source is silent")
    s_target = (float(est @ target) / energy) * target
    coef, *_ = np.linalg.lstsq(refs.T, est, rcond=None)
    p_all = refs.T @ coef
    return s_target, p_all - s_target, est - p_all


def bss_eval(estimate, true_sources, target_index: int = 0) -> SeparationScores:
    """SDR/SIR/SAR of ``estimate`` against ``true_sources[target_index]`` (0-based)."""
    sr = [getattr(s, "sample_rate", None) for s in (estimate, *true_sources)]
    if len({r for r in sr if r is not None}) > 1:
        raise DimensionError(f"sample rates differ: {sr}")
    s_t, e_i, e_a = decompose(estimate, true_sources, target_index)
    t2 = float(s_t @ s_t)
    i2 = float(e_i @ e_i)
    a2 = float(e_a @ e_a)
    ti = s_t + e_i
    return SeparationScores(
        sdr=ratio_db(t2, float((e_i + e_a) @ (e_i + e_a))),
        sir=ratio_db(t2, i2),
        sar=ratio_db(float(ti @ ti), a2),
        clip_len=int(s_t.shape[0]),
    )


def sdr(estimate, clean, mixture) -> float:
    """SDR of ``estimate`` for source ``clean`` taken from a two-source mixture."""
    v = _samples(clean)
    x = _samples(mixture)
    if v.shape != x.shape:
        raise DimensionError(f"clean has {v.shape[0]} samples, mixture has {x.shape[0]}")
    return bss_eval(estimate, [v, x - v], 0).sdr


def nsdr(estimate, clean, mixture) -> float:
    """SDR(estimate, clean) - SDR(mixture, clean), sources taken as {clean, mixture - clean}."""
    return sdr(estimate, clean, mixture) - sdr(mixture, clean, mixture)


def global_scores(per_clip) -> GlobalScores:
    """Length-weighted means of ``(nsdr, sir, sar, clip_len)`` tuples."""
    rows = list(per_clip)
    if not rows:
        raise ValueError("no clips to aggregate")
    lens = np.array([r[3] for r in rows], dtype=np.float64)
    if np.any(lens <= 0):
        raise ValueError("clip lengths must be positive")
    vals = np.array([r[:3] for r in rows], dtype=np.float64)
    means = (lens @ vals) / lens.sum()
    return GlobalScores(float(means[0]), float(means[1]), float(means[2]))


def weighted_mean(values, lengths) -> float:
    lengths = np.asarray(lengths, dtype=np.float64)
    return float(np.dot(lengths, np.asarray(values, dtype=np.float64)) / lengths.sum())


def _fmt(v):
    return f"{v:.6f}" if isinstance(v, float) else v


def write_csv(path, rows, fields) -> None:
    """UTF-8 CSV with a header row and RFC-4180 quoting; floats at 6 decimals."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\r\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in fields})


def read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))

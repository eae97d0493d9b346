"""Glue between corpora, features, models and metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..evaluation import bss_eval, nsdr
from ..model import DrnnModel, masked_forward
from ..nmf import NmfBasis, nmf_separate, nmf_train
from ..signal import (
    AudioClip,
    StftConfig,
    circular_shift_pairs,
    context_window,
    istft,
    logmel_with_deltas,
    magnitude,
    mix_at_snr,
    reconstruct_with_mixture_phase,
    spectral_features,
    stft,
)
from ..training.backprop import Sequence, TrainingBatch, chop_sequences


@dataclass(frozen=True)
class FeatureConfig:
    kind: str = "spectra"
    context_frames: int = 1
    n_mels: int = 40
    fft_size: int = 1024
    hop: int = 512
    window: str = "hann"

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.fft_size, self.hop, self.window)

    def input_dim(self) -> int:
        base = self.stft.n_bins if self.kind == "spectra" else 3 * self.n_mels
        return base * self.context_frames

    def as_meta(self) -> dict:
        return {
            "feature_kind": self.kind,
            "context_frames": self.context_frames,
            "n_mels": self.n_mels,
            "fft_size": self.fft_size,
            "hop": self.hop,
            "window": self.window,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "FeatureConfig":
        return cls(meta["feature_kind"], int(meta["context_frames"]), int(meta["n_mels"]),
                   int(meta["fft_size"]), int(meta["hop"]), meta["window"])


def features_for(spec, fcfg: FeatureConfig) -> np.ndarray:
    if fcfg.kind == "spectra":
        seq = spectral_features(spec)
    else:
        seq = logmel_with_deltas(spec, fcfg.n_mels, spec.sample_rate)
    return context_window(seq, fcfg.context_frames).vectors


@dataclass
class Example:
    """A mixture with its clean addends and the derived spectra."""

    clip_id: str
    mixture: AudioClip
    s1: AudioClip
    s2: AudioClip
    mix_spec: object
    inputs: np.ndarray
    z: np.ndarray
    y1: np.ndarray
    y2: np.ndarray


def make_example(clip_id, mixture, s1, s2, fcfg: FeatureConfig) -> Example:
    cfg = fcfg.stft
    spec = stft(mixture, cfg)
    return Example(clip_id, mixture, s1, s2, spec, features_for(spec, fcfg), magnitude(spec),
                   magnitude(stft(s1, cfg)), magnitude(stft(s2, cfg)))


def mix_pairs(pairs, snr_db=0.0, shift_step=0):
    """Mix source pairs, optionally with circular-shift augmentation.

    Yields ``(clip_id, shift, mixture, s1, s2)``.
    """
    for p in pairs:
        if shift_step and shift_step > 0:
            for k, (m, a, b) in enumerate(circular_shift_pairs(p.s1, p.s2, shift_step, snr_db)):
                yield f"{p.clip_id}_s{k:02d}", k * shift_step, m, a, b
        else:
            m, a, b = mix_at_snr(p.s1, p.s2, snr_db)
            yield p.clip_id, 0, m, a, b


def examples_from_pairs(pairs, fcfg, snr_db=0.0, shift_step=0):
    return [make_example(cid, m, a, b, fcfg) for cid, _, m, a, b in mix_pairs(pairs, snr_db, shift_step)]


def batch_from_examples(examples, max_len=100) -> TrainingBatch:
    seqs = []
    for ex in examples:
        seqs.extend(chop_sequences(ex.inputs, ex.z, ex.y1, ex.y2, max_len).sequences)
    return TrainingBatch(seqs)


def separate_drnn(model: DrnnModel, mixture: AudioClip, fcfg: FeatureConfig):
    """Estimate both sources of ``mixture`` with the masked network output."""
    spec = stft(mixture, fcfg.stft)
    trace = masked_forward(model, features_for(spec, fcfg), magnitude(spec))
    return (reconstruct_with_mixture_phase(trace.y1_tilde, spec),
            reconstruct_with_mixture_phase(trace.y2_tilde, spec))


def train_nmf_bases(examples, K=20, iterations=200, seed=0):
    y1 = np.vstack([ex.y1 for ex in examples]).T
    y2 = np.vstack([ex.y2 for ex in examples]).T
    return nmf_train(y1, K, iterations, seed), nmf_train(y2, K, iterations, seed + 1)


def separate_nmf(bases, mixture: AudioClip, fcfg: FeatureConfig, iterations=100, seed=0):
    spec = stft(mixture, fcfg.stft)
    s1, s2 = nmf_separate(magnitude(spec).T, bases[0], bases[1], iterations, seed)
    return (reconstruct_with_mixture_phase(s1.T, spec),
            reconstruct_with_mixture_phase(s2.T, spec))


def ideal_ratio_separation(example: Example):
    """Oracle soft mask |S1| / (|S1| + |S2|) applied to the mixture."""
    tot = example.y1 + example.y2
    ok = tot > 0
    m = np.where(ok, example.y1 / np.where(ok, tot, 1.0), 0.5)
    return (reconstruct_with_mixture_phase(m * example.z, example.mix_spec),
            reconstruct_with_mixture_phase((1.0 - m) * example.z, example.mix_spec))


def score_estimates(clip_id, estimates, s1, s2, mixture):
    """Per-source metric rows for one clip."""
    rows = []
    refs = [s1.samples, s2.samples]
    for j, est in enumerate(estimates):
        sc = bss_eval(est, refs, j)
        rows.append({
            "clip_id": clip_id,
            "source": j + 1,
            "sdr": sc.sdr,
            "sir": sc.sir,
            "sar": sc.sar,
            "nsdr": nsdr(est, refs[j], mixture),
            "len_samples": sc.clip_len,
        })
    return rows

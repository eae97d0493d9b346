"""Synthetic two-source corpora and adapters for on-disk datasets.

Every generator returns ``(s1, s2)`` sample arrays.  Source 1 is the
"foreground" class (band-limited noise in the low band, harmonic chirps,
pitched notes) and source 2 the interferer, so models trained on one
generator can be evaluated on another (mismatched-condition tests).
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..signal import AudioClip, read_wav

GENERATORS = ("disjoint_band_noise", "chirps", "harmonic_vs_percussive")


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    generator: str = "disjoint_band_noise"
    clip_len: float = 2.0
    n_train: int = 8
    n_dev: int = 1
    n_test: int = 2
    seed: int = 0
    sample_rate: int = 16000
    level_spread_db: float = 0.0

    def __post_init__(self):
        for g in self.generators:
            if g not in GENERATORS:
                raise ConfigurationError(f"unknown generator {g!r}; choose from {GENERATORS}")
        if min(self.n_train, self.n_dev, self.n_test) < 1:
            raise ConfigurationError("corpus split counts must be >= 1")
        if self.clip_len <= 0:
            raise ConfigurationError("clip_len must be positive")
        if self.level_spread_db < 0:
            raise ConfigurationError("level_spread_db must be >= 0")

    @property
    def generators(self):
        """Generator names; ``a+b`` mixes several generators clip by clip."""
        return tuple(self.generator.split("+"))


def _band_noise(rng, n, sr, lo, hi, edge=150.0):
    """White noise shaped to [lo, hi] Hz with raised-cosine skirts of width ``edge``."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sr)
    gain = np.zeros_like(f)
    gain[(f >= lo) & (f <= hi)] = 1.0
    for a, b, rising in ((lo - edge, lo, True), (hi, hi + edge, False)):
        sel = (f > a) & (f < b)
        ramp = 0.5 - 0.5 * np.cos(np.pi * (f[sel] - a) / (b - a))
        gain[sel] = ramp if rising else 1.0 - ramp
    x = np.fft.irfft(spec * gain, n)
    return x / (np.std(x) + 1e-12)


def _envelope(rng, n, sr, depth=0.8, max_hz=4.0):
    """Slow random amplitude envelope in [1 - depth, 1]."""
    t = np.arange(n) / sr
    env = np.zeros(n)
    for _ in range(3):
        env += np.sin(2 * np.pi * rng.uniform(0.3, max_hz) * t + rng.uniform(0, 2 * np.pi))
    env = (env - env.min()) / (np.ptp(env) + 1e-12)
    return 1.0 - depth + depth * env


def _harmonic_chirps(rng, n, sr):
    out = np.zeros(n)
    pos = 0
    while pos < n:
        seg = int(rng.uniform(0.2, 0.5) * sr)
        m = min(seg, n - pos)
        t = np.arange(m) / sr
        f_start, f_end = rng.uniform(150.0, 450.0, size=2)
        f0 = f_start + (f_end - f_start) * t / (seg / sr)
        phase = 2 * np.pi * np.cumsum(f0) / sr
        tone = sum(np.sin(h * phase) / h for h in range(1, 8) if h * max(f_start, f_end) < sr / 2)
        ramp = np.minimum(1.0, np.minimum(t, t[::-1]) / 0.01)
        out[pos:pos + m] = tone * ramp
        pos += seg
    return out / (np.std(out) + 1e-12)


def _pitched_notes(rng, n, sr):
    out = np.zeros(n)
    pos = 0
    while pos < n:
        seg = int(rng.uniform(0.15, 0.4) * sr)
        m = min(seg, n - pos)
        t = np.arange(m) / sr
        f0 = 110.0 * 2 ** (rng.integers(0, 30) / 12.0)
        vib = 1.0 + 0.01 * np.sin(2 * np.pi * 5.5 * t)
        phase = 2 * np.pi * np.cumsum(f0 * vib) / sr
        amps = rng.uniform(0.2, 1.0, size=10) / np.arange(1, 11)
        tone = sum(a * np.sin(h * phase) for h, a in zip(range(1, 11), amps) if h * f0 < sr / 2)
        env = np.minimum(1.0, t / 0.02) * np.exp(-t * rng.uniform(1.0, 4.0))
        out[pos:pos + m] = tone * env
        pos += seg
    return out / (np.std(out) + 1e-12)


def _percussive(rng, n, sr):
    out = np.zeros(n)
    onsets = np.sort(rng.integers(0, n, size=max(1, int(n / sr * 6))))
    for o in onsets:
        m = min(n - o, int(0.25 * sr))
        t = np.arange(m) / sr
        lo = rng.uniform(100.0, 2000.0)
        burst = _band_noise(rng, m, sr, lo, min(sr / 2 - 200.0, lo * rng.uniform(3.0, 8.0)))
        out[o:o + m] += burst * np.exp(-t * rng.uniform(15.0, 40.0))
    return out / (np.std(out) + 1e-12)


def generate_pair(generator: str, rng, n: int, sr: int = 16000):
    """Draw one ``(s1, s2)`` source pair of ``n`` samples."""
    if generator == "disjoint_band_noise":
        s1 = _band_noise(rng, n, sr, 200.0, 1800.0) * _envelope(rng, n, sr)
        s2 = _band_noise(rng, n, sr, 3500.0, 7000.0) * _envelope(rng, n, sr)
    elif generator == "chirps":
        s1 = _harmonic_chirps(rng, n, sr) * _envelope(rng, n, sr, depth=0.5)
        s2 = _band_noise(rng, n, sr, 100.0, 7500.0) * _envelope(rng, n, sr)
        s2 = np.diff(s2, prepend=0.0)  # tilt towards high frequencies
    elif generator == "harmonic_vs_percussive":
        s1 = _pitched_notes(rng, n, sr)
        s2 = _percussive(rng, n, sr)
    else:
        raise ConfigurationError(f"unknown generator {generator!r}")
    return 0.1 * s1 / (np.std(s1) + 1e-12), 0.1 * s2 / (np.std(s2) + 1e-12)


@dataclass
class SourcePair:
    clip_id: str
    s1: AudioClip
    s2: AudioClip
    generator: str = ""


def synthetic_splits(spec: SyntheticCorpusSpec):
    """Return ``{"train": [...], "dev": [...], "test": [...]}`` of SourcePairs.

    With ``level_spread_db > 0`` every clip is played back at a random level
    drawn uniformly (in dB) from a window of that width around the nominal one.
    """
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.clip_len * spec.sample_rate))
    gens = spec.generators
    splits = {}
    counter = 0
    for split, count in (("train", spec.n_train), ("dev", spec.n_dev), ("test", spec.n_test)):
        pairs = []
        for i in range(count):
            gen = gens[counter % len(gens)]
            counter += 1
            a, b = generate_pair(gen, rng, n, spec.sample_rate)
            if spec.level_spread_db > 0:
                # same gain for both sources: the mixing SNR is untouched
                gain = 10.0 ** (rng.uniform(-0.5, 0.5) * spec.level_spread_db / 20.0)
                a, b = gain * a, gain * b
            pairs.append(SourcePair(f"{split}_{i:04d}", AudioClip(a, spec.sample_rate),
                                    AudioClip(b, spec.sample_rate), gen))
        splits[split] = pairs
    return splits


def directory_pairs(dir1, dir2, sample_rate=16000, channels=(None, None)):
    """Pair WAV files by sorted order from two source directories.

    For MIR-1K-style stereo files pass the same directory twice with
    ``channels=(1, 0)`` (voice on the right channel, accompaniment on the left).
    """
    d1, d2 = Path(dir1), Path(dir2)
    for d in (d1, d2):
        if not d.is_dir():
            raise FileNotFoundError(f"source directory not found: {d}")
    f1 = sorted(d1.glob("*.wav"))
    f2 = sorted(d2.glob("*.wav"))
    if not f1 or not f2:
        raise FileNotFoundError(f"no WAV files in {d1 if not f1 else d2}")
    pairs = []
    for i, (a, b) in enumerate(zip(f1, f2)):
        pairs.append(SourcePair(a.stem, read_wav(a, channels[0], sample_rate),
                                read_wav(b, channels[1], sample_rate), "files"))
    return pairs


def split_pairs(pairs, seed=0, fractions=(0.8, 0.1, 0.1)):
    """80/10/10 split by manifest order after a seeded shuffle."""
    order = np.random.default_rng(seed).permutation(len(pairs))
    n = len(pairs)
    n_train = max(1, int(round(fractions[0] * n)))
    n_dev = max(1, int(round(fractions[1] * n))) if n >= 3 else 0
    shuffled = [pairs[i] for i in order]
    return {
        "train": shuffled[:n_train],
        "dev": shuffled[n_train:n_train + n_dev],
        "test": shuffled[n_train + n_dev:],
    }


MANIFEST_FIELDS = ("clip_id", "split", "generator", "mixture", "source1", "source2",
                   "snr_db", "shift", "sha256_mixture", "sha256_source1", "sha256_source2")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\r\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in MANIFEST_FIELDS})


def read_manifest(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))

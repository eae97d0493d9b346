"""STFT analysis/synthesis, log-mel features and mixture construction.

Conventions
-----------
Spectrograms are stored time-major: ``frames`` has shape ``(T, F)`` with
``F = fft_size // 2 + 1``.  Framing is centred by default: the clip is
zero-padded with ``fft_size // 2`` samples on the left and enough zeros on the
right so that ``T = ceil(len / hop) + 1`` frames cover every sample.  With
``center=False`` the first frame starts at sample 0 and
``T = max(1, ceil((len - fft_size) / hop) + 1)``.

Synthesis is weighted overlap-add (the analysis window is reapplied) divided
by the per-sample overlap sum of the squared window.  For a window satisfying
COLA at the configured hop this is exact, and it is also the least-squares
signal estimate when the spectrogram has been modified (masked).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import gcd

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .errors import ConfigurationError, DegenerateInputError, DimensionError

LOG_FLOOR = 1e-10
DELTA_HALF_WINDOW = 2
DEFAULT_SAMPLE_RATE = 16000

__all__ = [
    "AudioClip",
    "StftConfig",
    "Spectrogram",
    "FeatureSequence",
    "stft",
    "istft",
    "magnitude",
    "reconstruct_with_mixture_phase",
    "mel_filterbank",
    "deltas",
    "logmel_with_deltas",
    "spectral_features",
    "context_window",
    "mix_at_snr",
    "circular_shifts",
    "circular_shift_pairs",
    "read_wav",
    "write_wav",
]


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.samples.size == 0:
            raise DegenerateInputError("audio clip is empty")
        if int(self.sample_rate) <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    hop: int = 512
    window: str = "hann"
    center: bool = True

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ConfigurationError(f"fft_size must be a power of two, got {n}")
        if not 0 < self.hop <= n:
            raise ConfigurationError(f"hop must satisfy 0 < hop <= fft_size, got hop={self.hop}")
        try:
            w = self.window_array()
        except ValueError as exc:
            raise ConfigurationError(f"unknown window {self.window!r}") from exc
        if not _is_cola(w, self.hop):
            raise ConfigurationError(
                f"window {self.window!r} is not constant-overlap-add at hop {self.hop}"
            )

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def window_array(self) -> np.ndarray:
        name = "boxcar" if self.window in ("rect", "rectangular") else self.window
        return scipy.signal.get_window(name, self.fft_size, fftbins=True).astype(np.float64)

    def n_frames(self, length: int) -> int:
        if self.center:
            return -(-length // self.hop) + 1
        return max(1, -(-(length - self.fft_size) // self.hop) + 1)


def _is_cola(window, hop, tol=1e-10):
    n = window.shape[0]
    acc = np.zeros(hop)
    for start in range(0, n, hop):
        seg = window[start:start + hop]
        acc[: seg.shape[0]] += seg
    return np.max(np.abs(acc - acc.mean())) <= tol * max(1.0, abs(acc.mean())) and acc.mean() > 0


@dataclass
class Spectrogram:
    frames: np.ndarray
    config: StftConfig
    original_length: int
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.complex128)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.config.n_bins:
            raise DimensionError(
                f"frames must be (T, {self.config.n_bins}), got {self.frames.shape}"
            )

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.frames)


@dataclass
class FeatureSequence:
    vectors: np.ndarray
    kind: str = "spectra"
    context_frames: int = 1
    base_dim: int = field(default=0)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise DimensionError(f"feature vectors must be 2-D, got shape {self.vectors.shape}")
        if self.kind not in ("spectra", "logmel_deltas"):
            raise ConfigurationError(f"unknown feature kind {self.kind!r}")
        if self.context_frames < 1 or self.context_frames % 2 == 0:
            raise ConfigurationError("context_frames must be a positive odd integer")
        if not self.base_dim:
            self.base_dim = self.vectors.shape[1] // self.context_frames
        if self.base_dim * self.context_frames != self.vectors.shape[1]:
            raise DimensionError("feature width is not context_frames * base_dim")

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _padding(cfg: StftConfig, length: int):
    T = cfg.n_frames(length)
    total = (T - 1) * cfg.hop + cfg.fft_size
    left = cfg.fft_size // 2 if cfg.center else 0
    return T, left, total - length - left


def stft(clip: AudioClip, cfg: StftConfig | None = None) -> Spectrogram:
    """Short-time Fourier transform of ``clip``.

    Returns a ``Spectrogram`` whose row ``t`` is the real DFT of the windowed
    segment starting at padded sample ``t * hop``.
    """
    cfg = cfg or StftConfig()
    x = clip.samples
    T, left, right = _padding(cfg, x.shape[0])
    padded = np.concatenate([np.zeros(left), x, np.zeros(right)])
    segments = np.lib.stride_tricks.sliding_window_view(padded, cfg.fft_size)[:: cfg.hop]
    assert segments.shape[0] == T
    frames = np.fft.rfft(segments * cfg.window_array(), axis=1)
    return Spectrogram(frames, cfg, x.shape[0], clip.sample_rate)


def istft(spec: Spectrogram) -> AudioClip:
    """Inverse of :func:`stft` by weighted overlap-add."""
    cfg = spec.config
    T, left, right = _padding(cfg, spec.original_length)
    if spec.n_frames != T:
        raise DimensionError(
            f"spectrogram has {spec.n_frames} frames, expected {T} for length {spec.original_length}"
        )
    w = cfg.window_array()
    segments = np.fft.irfft(spec.frames, n=cfg.fft_size, axis=1) * w
    total = (T - 1) * cfg.hop + cfg.fft_size
    out = np.zeros(total)
    norm = np.zeros(total)
    w2 = w * w
    for t in range(T):
        s = t * cfg.hop
        out[s:s + cfg.fft_size] += segments[t]
        norm[s:s + cfg.fft_size] += w2
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    return AudioClip(out[left:left + spec.original_length], spec.sample_rate)


def magnitude(spec: Spectrogram) -> np.ndarray:
    return np.abs(spec.frames)


def reconstruct_with_mixture_phase(mag, mixture: Spectrogram) -> AudioClip:
    """Resynthesise a magnitude estimate using the phase of ``mixture``."""
    mag = np.asarray(mag, dtype=np.float64)
    if mag.shape != mixture.frames.shape:
        raise DimensionError(f"magnitude shape {mag.shape} != mixture shape {mixture.frames.shape}")
    frames = mag * np.exp(1j * np.angle(mixture.frames))
    return istft(Spectrogram(frames, mixture.config, mixture.original_length, mixture.sample_rate))


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_bins: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel filterbank of shape ``(n_mels, n_bins)`` spanning 0..sr/2."""
    if n_mels < 1:
        raise ConfigurationError("n_mels must be >= 1")
    if n_mels > n_bins:
        raise ConfigurationError(f"n_mels={n_mels} exceeds the number of frequency bins {n_bins}")
    bin_hz = np.linspace(0.0, sample_rate / 2.0, n_bins)
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(sample_rate / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for i in range(n_mels):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        rising = (bin_hz - lo) / (mid - lo)
        falling = (hi - bin_hz) / (hi - mid)
        fb[i] = np.maximum(0.0, np.minimum(rising, falling))
        if not fb[i].any():
            # filter narrower than the bin spacing: take the nearest bin
            fb[i, np.argmin(np.abs(bin_hz - mid))] = 1.0
    return fb


def deltas(features, half_window: int = DELTA_HALF_WINDOW) -> np.ndarray:
    """Regression deltas along time (axis 0) with edge replication.

    d_t = sum_{n=1..N} n (c_{t+n} - c_{t-n}) / (2 sum_{n=1..N} n^2)
    """
    c = np.asarray(features, dtype=np.float64)
    T = c.shape[0]
    idx = np.arange(T)
    out = np.zeros_like(c)
    for n in range(1, half_window + 1):
        out += n * (c[np.minimum(idx + n, T - 1)] - c[np.maximum(idx - n, 0)])
    return out / (2.0 * sum(n * n for n in range(1, half_window + 1)))


def logmel_with_deltas(spec: Spectrogram, n_mels: int = 40, sample_rate: int | None = None) -> FeatureSequence:
    """Static log-mel energies followed by their first and second deltas."""
    sr = sample_rate or spec.sample_rate
    fb = mel_filterbank(n_mels, spec.config.n_bins, sr)
    power = np.abs(spec.frames) ** 2
    static = np.log(np.maximum(power @ fb.T, LOG_FLOOR))
    d1 = deltas(static)
    d2 = deltas(d1)
    return FeatureSequence(np.hstack([static, d1, d2]), kind="logmel_deltas")


def spectral_features(spec: Spectrogram) -> FeatureSequence:
    return FeatureSequence(np.abs(spec.frames), kind="spectra")


def context_window(seq: FeatureSequence, frames: int) -> FeatureSequence:
    """Concatenate each frame with its ``(frames-1)/2`` neighbours on each side."""
    if frames < 1 or frames % 2 == 0:
        raise ConfigurationError(f"context window must be a positive odd number of frames, got {frames}")
    if frames == 1:
        return seq
    half = frames // 2
    T = len(seq)
    idx = np.arange(T)
    parts = [seq.vectors[np.clip(idx + k, 0, T - 1)] for k in range(-half, half + 1)]
    return FeatureSequence(
        np.hstack(parts), kind=seq.kind, context_frames=seq.context_frames * frames,
        base_dim=seq.base_dim,
    )


def mix_at_snr(s1: AudioClip, s2: AudioClip, snr_db: float = 0.0):
    """Mix two clips so that 10 log10(E1 / E2') equals ``snr_db``.

    Both clips are truncated to the shorter length and only ``s2`` is rescaled.
    Returns ``(mixture, s1', s2')`` with ``mixture.samples == s1'.samples + s2'.samples``.
    """
    if s1.sample_rate != s2.sample_rate:
        raise ConfigurationError(f"sample rates differ: {s1.sample_rate} vs {s2.sample_rate}")
    n = min(len(s1), len(s2))
    a = s1.samples[:n]
    b = s2.samples[:n]
    e1 = float(np.dot(a, a))
    e2 = float(np.dot(b, b))
    if e1 == 0.0 or e2 == 0.0:
        raise DegenerateInputError("SNR is undefined when a source is silent over the mixed region")
    gain = math.sqrt(e1 / (e2 * 10.0 ** (snr_db / 10.0)))
    b = gain * b
    sr = s1.sample_rate
    return AudioClip(a + b, sr), AudioClip(a.copy(), sr), AudioClip(b, sr)


def circular_shifts(length: int, step: int) -> list[int]:
    if step <= 0:
        raise ConfigurationError("circular shift step must be positive")
    return [k * step for k in range(max(1, length // step))]


def circular_shift_pairs(s1: AudioClip, s2: AudioClip, step: int, snr_db: float = 0.0):
    """Augment a source pair by circularly shifting ``s2`` in steps of ``step`` samples."""
    pairs = []
    for shift in circular_shifts(len(s2), step):
        shifted = AudioClip(np.roll(s2.samples, shift), s2.sample_rate)
        pairs.append(mix_at_snr(s1, shifted, snr_db))
    return pairs


def read_wav(path, channel: int | None = None, target_rate: int | None = DEFAULT_SAMPLE_RATE) -> AudioClip:
    """Read a PCM16 / float WAV file as a mono clip.

    ``channel`` selects one channel of a multichannel file (MIR-1K keeps
    accompaniment and voice in separate channels); ``None`` averages them.
    The result is resampled to ``target_rate`` with a polyphase filter when needed.
    """
    rate, data = scipy.io.wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        if channel is None:
            x = x.mean(axis=1)
        else:
            if not 0 <= channel < x.shape[1]:
                raise ConfigurationError(f"channel {channel} not present in {path} ({x.shape[1]} channels)")
            x = x[:, channel]
    if target_rate and rate != target_rate:
        g = gcd(int(rate), int(target_rate))
        x = scipy.signal.resample_poly(x, target_rate // g, rate // g)
        rate = target_rate
    return AudioClip(x, rate)


def write_wav(path, clip: AudioClip, subtype: str = "float32") -> None:
    """Write a mono WAV as IEEE float32 (default), float64 or PCM16.

    ``float64`` keeps samples bit-exact, which the corpus writer relies on.
    """
    if subtype == "float32":
        data = clip.samples.astype(np.float32)
    elif subtype == "float64":
        data = clip.samples.astype(np.float64)
    elif subtype == "pcm16":
        data = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise ConfigurationError(f"unsupported WAV subtype {subtype!r}")
    scipy.io.wavfile.write(str(path), clip.sample_rate, data)

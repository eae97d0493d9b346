"""Generalized-KL NMF baseline with per-source bases fixed at separation time."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .errors import ConfigurationError, DegenerateInputError, DimensionError

NMF_MAGIC = b"NMFBASE1"
EPS = 1e-12


@dataclass
class NmfBasis:
    """F x K nonnegative basis with L1-normalised columns."""

    B: np.ndarray

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=np.float64)
        if self.B.ndim != 2 or np.any(self.B < 0):
            raise ConfigurationError("basis must be a nonnegative F x K matrix")

    @property
    def n_bins(self) -> int:
        return self.B.shape[0]

    @property
    def K(self) -> int:
        return self.B.shape[1]


def kl_divergence(V, Lam) -> float:
    """Generalized KL divergence sum(V log(V/Lam) - V + Lam), with 0 log 0 = 0."""
    V = np.asarray(V, dtype=np.float64)
    Lam = np.maximum(np.asarray(Lam, dtype=np.float64), 1e-300)
    pos = V > 0
    return float(np.sum(V[pos] * np.log(V[pos] / Lam[pos])) - V.sum() + Lam.sum())


def _update_h(V, B, H):
    ratio = V / (B @ H + EPS)
    return H * (B.T @ ratio) / (B.sum(axis=0)[:, None] + EPS)


def _update_b(V, B, H):
    ratio = V / (B @ H + EPS)
    return B * (ratio @ H.T) / (H.sum(axis=1)[None, :] + EPS)


def _normalize(B, H):
    scale = B.sum(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return B / scale, H * scale[:, None]


def _init(rng, shape):
    return 1.0 - rng.random(shape)  # uniform on (0, 1]


def nmf_fit(V, K: int, iterations: int = 200, seed: int = 0):
    """Multiplicative-update KL-NMF ``V ~ B H``.

    Returns ``(B, H, objective)`` where ``objective[i]`` is the divergence
    after ``i`` iterations (``objective[0]`` at the initialisation).
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or np.any(V < 0):
        raise ConfigurationError("V must be a nonnegative F x T matrix")
    if K < 1:
        raise ConfigurationError(f"number of basis vectors must be >= 1, got {K}")
    if not np.any(V > 0):
        raise DegenerateInputError("cannot factorise an all-zero matrix")
    rng = np.random.default_rng(seed)
    B = _init(rng, (V.shape[0], K))
    H = _init(rng, (K, V.shape[1]))
    B, H = _normalize(B, H)
    objective = [kl_divergence(V, B @ H)]
    for _ in range(iterations):
        H = _update_h(V, B, H)
        B = _update_b(V, B, H)
        B, H = _normalize(B, H)
        objective.append(kl_divergence(V, B @ H))
    return B, H, objective


def nmf_train(V, K: int, iterations: int = 200, seed: int = 0) -> NmfBasis:
    """Learn a source-specific basis from training magnitudes ``V`` (F x T)."""
    B, _, _ = nmf_fit(V, K, iterations, seed)
    return NmfBasis(B)


def infer_activations(V, B, iterations: int = 100, seed: int = 0):
    """KL multiplicative updates of ``H`` only, ``B`` held fixed.

    Returns ``(H, objective)``.
    """
    V = np.asarray(V, dtype=np.float64)
    rng = np.random.default_rng(seed)
    H = _init(rng, (B.shape[1], V.shape[1]))
    objective = [kl_divergence(V, B @ H)]
    for _ in range(iterations):
        H = _update_h(V, B, H)
        objective.append(kl_divergence(V, B @ H))
    return H, objective


def nmf_separate(mixture_mag, basis1: NmfBasis, basis2: NmfBasis, iterations: int = 100, seed: int = 0):
    """Separate an F x T mixture magnitude with fixed source bases.

    Sources are recovered with ratio masks built from the two partial
    reconstructions, so ``s1 + s2 == mixture_mag``.
    """
    V = np.asarray(mixture_mag, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] != basis1.n_bins or basis2.n_bins != basis1.n_bins:
        raise DimensionError(
            f"mixture {V.shape} incompatible with bases {basis1.B.shape} / {basis2.B.shape}"
        )
    B = np.hstack([basis1.B, basis2.B])
    H, _ = infer_activations(V, B, iterations, seed)
    k1 = basis1.K
    lam1 = basis1.B @ H[:k1]
    lam2 = basis2.B @ H[k1:]
    total = lam1 + lam2
    ok = total > 0
    mask = np.where(ok, lam1 / np.where(ok, total, 1.0), 0.5)
    s1 = mask * V
    return s1, V - s1


def save_bases(path, bases, meta: dict | None = None) -> None:
    """Write one or more source bases (blocks ``B1``, ``B2``, ...) to a container."""
    header = {"kind": "nmf", "n_sources": len(bases), "meta": meta or {}}
    blocks = [(f"B{i}", b.B) for i, b in enumerate(bases, start=1)]
    container.write(path, NMF_MAGIC, header, blocks)


def load_bases(path):
    """Return ``([NmfBasis, ...], meta)``."""
    header, arrays = container.read(path, NMF_MAGIC)
    bases = [NmfBasis(arrays[f"B{i}"]) for i in range(1, header["n_sources"] + 1)]
    return bases, header.get("meta", {})

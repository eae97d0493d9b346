"""Exact gradients by backpropagation through time and through the mask layer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import DimensionError, NumericError
from ..model import MASK_EPS, DrnnModel, forward, masked_forward
from .losses import LossConfig, loss_and_grads


@dataclass
class Sequence:
    """One training sequence: input features plus mixture and target magnitudes."""

    inputs: np.ndarray
    z: np.ndarray
    y1: np.ndarray
    y2: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(getattr(self.inputs, "vectors", self.inputs), dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.float64)
        self.y1 = np.asarray(self.y1, dtype=np.float64)
        self.y2 = np.asarray(self.y2, dtype=np.float64)
        T = self.inputs.shape[0]
        if not (self.z.shape == self.y1.shape == self.y2.shape) or self.z.shape[0] != T:
            raise DimensionError(
                f"misaligned sequence: inputs {self.inputs.shape}, z {self.z.shape}, "
                f"y1 {self.y1.shape}, y2 {self.y2.shape}"
            )

    def __len__(self):
        return self.inputs.shape[0]


@dataclass
class TrainingBatch:
    sequences: list

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def subset(self, indices) -> "TrainingBatch":
        return TrainingBatch([self.sequences[i] for i in indices])

    @property
    def n_frames(self) -> int:
        return sum(len(s) for s in self.sequences)


def chop_sequences(inputs, z, y1, y2, max_len: int = 100) -> TrainingBatch:
    """Split one utterance into contiguous segments of at most ``max_len`` frames."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    x = np.asarray(getattr(inputs, "vectors", inputs), dtype=np.float64)
    T = x.shape[0]
    seqs = [
        Sequence(x[s:s + max_len], z[s:s + max_len], y1[s:s + max_len], y2[s:s + max_len])
        for s in range(0, T, max_len)
    ]
    return TrainingBatch(seqs)


def _output_grads(trace, seq, loss_cfg):
    """Loss of one sequence and dJ/d(raw output) of shape (T, 2F)."""
    if loss_cfg.use_masking_layer:
        J, g1, g2 = loss_and_grads(trace.y1_tilde, trace.y2_tilde, seq.y1, seq.y2, loss_cfg.gamma)
        a = np.abs(trace.y1_hat)
        b = np.abs(trace.y2_hat)
        s = a + b
        ok = s >= MASK_EPS
        # d y1~/da = z b / s^2, d y1~/db = -z a / s^2, and y2~ = z - y1~ in value
        coef = np.where(ok, seq.z * (g1 - g2) / np.where(ok, s * s, 1.0), 0.0)
        d1 = np.sign(trace.y1_hat) * coef * b
        d2 = -np.sign(trace.y2_hat) * coef * a
    else:
        J, d1, d2 = loss_and_grads(trace.y1_hat, trace.y2_hat, seq.y1, seq.y2, loss_cfg.gamma)
    if not np.isfinite(J):
        raise NumericError("non-finite loss")
    return J, np.hstack([d1, d2])


def sequence_loss(model: DrnnModel, seq: Sequence, loss_cfg: LossConfig) -> float:
    if loss_cfg.use_masking_layer:
        tr = masked_forward(model, seq.inputs, seq.z)
        J, _, _ = loss_and_grads(tr.y1_tilde, tr.y2_tilde, seq.y1, seq.y2, loss_cfg.gamma)
    else:
        tr = forward(model, seq.inputs)
        J, _, _ = loss_and_grads(tr.y1_hat, tr.y2_hat, seq.y1, seq.y2, loss_cfg.gamma)
    return J


def batch_loss(model: DrnnModel, batch, loss_cfg: LossConfig) -> float:
    """Summed loss over every sequence of ``batch``."""
    return float(sum(sequence_loss(model, s, loss_cfg) for s in batch))


def _sequence_gradient(model, seq, loss_cfg, grads):
    arch = model.arch
    L = arch.n_hidden
    if loss_cfg.use_masking_layer:
        tr = masked_forward(model, seq.inputs, seq.z)
    else:
        tr = forward(model, seq.inputs)
    J, d_out = _output_grads(tr, seq, loss_cfg)

    below = tr.hidden[L - 1]
    grads[f"W{L + 1}"] += d_out.T @ below
    grads[f"b{L + 1}"] += d_out.sum(axis=0)
    d_h = d_out @ model.W[L]
    for k in range(L, 0, -1):
        P = tr.pre[k - 1]
        if arch.is_recurrent(k):
            d_p = kernels.rnn_backward(d_h, P, model.U[k - 1])
            H = tr.hidden[k - 1]
            prev = np.vstack([tr.h0[k - 1][None, :], H[:-1]])
            grads[f"U{k}"] += d_p.T @ prev
        else:
            d_p = d_h * (P > 0.0)
        if not np.all(np.isfinite(d_p)):
            raise NumericError(f"non-finite gradient in hidden layer {k}", layer=k)
        x_below = tr.hidden[k - 2] if k > 1 else tr.inputs
        grads[f"W{k}"] += d_p.T @ x_below
        grads[f"b{k}"] += d_p.sum(axis=0)
        if k > 1:
            d_h = d_p @ model.W[k - 1]
    return J


def gradient(model: DrnnModel, batch, loss_cfg: LossConfig | None = None):
    """Loss and flat gradient summed over the sequences of ``batch``.

    The flat vector follows :meth:`DrnnModel.blocks` order.
    """
    loss_cfg = loss_cfg or LossConfig()
    if isinstance(batch, Sequence):
        batch = [batch]
    grads = {name: np.zeros_like(a) for name, a in model.blocks()}
    total = 0.0
    for seq in batch:
        total += _sequence_gradient(model, seq, loss_cfg, grads)
    flat = np.concatenate([grads[name].ravel() for name, _ in model.blocks()])
    return float(total), flat

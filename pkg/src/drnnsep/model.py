"""DNN / DRNN-l / stacked-RNN forward computation with a soft-mask output layer.

Hidden layer ``k`` (1-based) computes::

    h^k_t = relu(W^k h^{k-1}_t + U^k h^k_{t-1} + b^k),    h^0_t = x_t

where ``U^k`` exists only for recurrent layers.  The output layer is linear,
``o_t = W^{L+1} h^L_t + b^{L+1}``, and is split into the two source
predictions ``y1_hat = o_t[:F]`` and ``y2_hat = o_t[F:]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container, kernels
from .errors import ConfigurationError, DimensionError, NumericError

MODEL_MAGIC = b"DRNNSEP1"
MASK_EPS = 1e-12

__all__ = [
    "Architecture",
    "DrnnModel",
    "ForwardTrace",
    "init_model",
    "forward",
    "soft_mask",
    "apply_mask_separately",
    "masked_forward",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class Architecture:
    """Layer sizes ``[D_in, m_1, ..., m_L, 2F]`` and where the recurrence sits.

    ``recurrence`` is ``"none"``, ``"all"`` or a 1-based hidden-layer index.
    """

    layer_sizes: tuple
    recurrence: object = "none"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ConfigurationError("need at least one hidden layer: [D_in, m_1, ..., 2F]")
        if any(s < 1 for s in sizes):
            raise ConfigurationError(f"layer sizes must be positive: {sizes}")
        if sizes[-1] % 2:
            raise ConfigurationError(f"output size must be 2F (even), got {sizes[-1]}")
        rec = self.recurrence
        if isinstance(rec, str) and rec.isdigit():
            rec = int(rec)
            object.__setattr__(self, "recurrence", rec)
        if isinstance(rec, str):
            if rec not in ("none", "all"):
                raise ConfigurationError(f"unknown recurrence {rec!r}")
        elif not 1 <= int(rec) <= self.n_hidden:
            raise ConfigurationError(f"recurrent layer {rec} outside 1..{self.n_hidden}")

    @classmethod
    def named(cls, name: str, input_dim: int, hidden: list, n_bins: int) -> "Architecture":
        """Build from a short name: ``dnn``, ``drnn-<l>`` or ``srnn``."""
        sizes = (input_dim, *hidden, 2 * n_bins)
        name = name.lower()
        if name == "dnn":
            return cls(sizes, "none")
        if name == "srnn":
            return cls(sizes, "all")
        if name.startswith("drnn-"):
            return cls(sizes, int(name[5:]))
        raise ConfigurationError(f"unknown architecture name {name!r}")

    @property
    def name(self) -> str:
        if self.recurrence == "none":
            return "dnn"
        if self.recurrence == "all":
            return "srnn"
        return f"drnn-{self.recurrence}"

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_bins(self) -> int:
        return self.layer_sizes[-1] // 2

    def is_recurrent(self, k: int) -> bool:
        if self.recurrence == "none":
            return False
        if self.recurrence == "all":
            return 1 <= k <= self.n_hidden
        return k == self.recurrence


@dataclass
class DrnnModel:
    """Parameters of a network; ``W[k-1]``, ``b[k-1]`` belong to layer ``k``.

    ``U[k-1]`` is ``None`` for non-recurrent hidden layers (treated as zero).
    ``meta`` carries feature/STFT settings that travel with the model file.
    """

    arch: Architecture
    W: list
    U: list
    b: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        sizes = self.arch.layer_sizes
        L = self.arch.n_hidden
        if len(self.W) != L + 1 or len(self.b) != L + 1 or len(self.U) != L:
            raise DimensionError("parameter lists do not match the architecture depth")
        for k in range(1, L + 2):
            if self.W[k - 1].shape != (sizes[k], sizes[k - 1]):
                raise DimensionError(f"W^{k} has shape {self.W[k - 1].shape}, expected {(sizes[k], sizes[k - 1])}")
            if self.b[k - 1].shape != (sizes[k],):
                raise DimensionError(f"b^{k} has shape {self.b[k - 1].shape}")
        for k in range(1, L + 1):
            u = self.U[k - 1]
            if self.arch.is_recurrent(k):
                if u is None or u.shape != (sizes[k], sizes[k]):
                    raise DimensionError(f"U^{k} missing or mis-shaped")
            elif u is not None:
                raise DimensionError(f"layer {k} is not recurrent but U^{k} was given")

    def blocks(self):
        """Named parameter blocks in the canonical (file and flat-vector) order."""
        out = []
        L = self.arch.n_hidden
        for k in range(1, L + 2):
            out.append((f"W{k}", self.W[k - 1]))
            if k <= L and self.U[k - 1] is not None:
                out.append((f"U{k}", self.U[k - 1]))
            out.append((f"b{k}", self.b[k - 1]))
        return out

    @property
    def n_params(self) -> int:
        return sum(a.size for _, a in self.blocks())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.blocks()])

    def with_flat(self, theta) -> "DrnnModel":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise DimensionError(f"flat vector has {theta.size} entries, model has {self.n_params}")
        arrays = {}
        offset = 0
        for name, a in self.blocks():
            arrays[name] = theta[offset:offset + a.size].reshape(a.shape).copy()
            offset += a.size
        return _from_blocks(self.arch, arrays, dict(self.meta))

    def copy(self) -> "DrnnModel":
        return self.with_flat(self.flat())


def _from_blocks(arch, arrays, meta):
    L = arch.n_hidden
    W = [arrays[f"W{k}"] for k in range(1, L + 2)]
    b = [arrays[f"b{k}"] for k in range(1, L + 2)]
    U = [arrays.get(f"U{k}") if arch.is_recurrent(k) else None for k in range(1, L + 1)]
    return DrnnModel(arch, W, U, b, meta)


def init_model(arch: Architecture, seed: int = 0, meta: dict | None = None) -> DrnnModel:
    """Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    sizes = arch.layer_sizes
    W, U, b = [], [], []
    for k in range(1, len(sizes)):
        fan_in, fan_out = sizes[k - 1], sizes[k]
        r = np.sqrt(6.0 / (fan_in + fan_out))
        W.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
        b.append(np.zeros(fan_out))
        if k <= arch.n_hidden:
            if arch.is_recurrent(k):
                r = np.sqrt(6.0 / (2 * fan_out))
                U.append(rng.uniform(-r, r, size=(fan_out, fan_out)))
            else:
                U.append(None)
    return DrnnModel(arch, W, U, b, dict(meta or {}))


@dataclass
class ForwardTrace:
    """Everything one forward pass produced, time-major.

    ``pre[k-1]``/``hidden[k-1]`` are the pre-activations/activations of hidden
    layer ``k``.  The masked fields are ``None`` after a plain :func:`forward`.
    """

    inputs: np.ndarray
    pre: list
    hidden: list
    h0: list
    output: np.ndarray
    y1_hat: np.ndarray
    y2_hat: np.ndarray
    z: np.ndarray | None = None
    mask: np.ndarray | None = None
    y1_tilde: np.ndarray | None = None
    y2_tilde: np.ndarray | None = None


def _as_matrix(inputs):
    x = getattr(inputs, "vectors", inputs)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"inputs must be T x D, got shape {x.shape}")
    return x


def forward(model: DrnnModel, inputs, h0=None) -> ForwardTrace:
    """Run the network over one sequence.

    ``h0`` optionally maps hidden-layer index to an initial state (zeros otherwise).
    """
    x = _as_matrix(inputs)
    arch = model.arch
    if x.shape[1] != arch.input_dim:
        raise DimensionError(f"input dim {x.shape[1]} != model input dim {arch.input_dim}")
    h0 = h0 or {}
    pre, hidden, states = [], [], []
    h = x
    for k in range(1, arch.n_hidden + 1):
        a = h @ model.W[k - 1].T + model.b[k - 1]
        if arch.is_recurrent(k):
            init = np.asarray(h0.get(k, np.zeros(arch.layer_sizes[k])), dtype=np.float64)
            if init.shape != (arch.layer_sizes[k],):
                raise DimensionError(f"h0 for layer {k} has shape {init.shape}")
            h, p = kernels.rnn_forward(a, model.U[k - 1], init)
            states.append(init)
        else:
            p = a
            h = np.maximum(a, 0.0)
            states.append(None)
        if not np.all(np.isfinite(p)):
            raise NumericError(f"non-finite activations in hidden layer {k}", layer=k)
        pre.append(p)
        hidden.append(h)
    out = h @ model.W[-1].T + model.b[-1]
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite network output", layer=arch.n_hidden + 1)
    F = arch.n_bins
    return ForwardTrace(x, pre, hidden, states, out, out[:, :F], out[:, F:])


def soft_mask(y1_hat, y2_hat):
    """|y1| / (|y1| + |y2|) elementwise; 0.5 where the denominator is below 1e-12."""
    a = np.abs(np.asarray(y1_hat, dtype=np.float64))
    b = np.abs(np.asarray(y2_hat, dtype=np.float64))
    if a.shape != b.shape:
        raise DimensionError(f"prediction shapes differ: {a.shape} vs {b.shape}")
    s = a + b
    ok = s >= MASK_EPS
    return np.where(ok, a / np.where(ok, s, 1.0), 0.5)


def _mask_pair(y1_hat, y2_hat):
    a = np.abs(y1_hat)
    b = np.abs(y2_hat)
    s = a + b
    ok = s >= MASK_EPS
    safe = np.where(ok, s, 1.0)
    return np.where(ok, a / safe, 0.5), np.where(ok, b / safe, 0.5)


def apply_mask_separately(mask, z):
    """(m * z, (1 - m) * z)."""
    mask = np.asarray(mask, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if mask.shape != z.shape:
        raise DimensionError(f"mask shape {mask.shape} != mixture shape {z.shape}")
    s1 = mask * z
    return s1, z - s1


def masked_forward(model: DrnnModel, inputs, z, h0=None) -> ForwardTrace:
    """Forward pass followed by the deterministic soft-mask layer applied to ``z``."""
    trace = forward(model, inputs, h0)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != trace.y1_hat.shape:
        raise DimensionError(f"mixture magnitudes {z.shape} do not match outputs {trace.y1_hat.shape}")
    m1, m2 = _mask_pair(trace.y1_hat, trace.y2_hat)
    trace.z = z
    trace.mask = m1
    trace.y1_tilde = m1 * z
    trace.y2_tilde = m2 * z
    return trace


def save_model(model: DrnnModel, path) -> None:
    header = {
        "kind": "drnn",
        "layer_sizes": list(model.arch.layer_sizes),
        "recurrence": model.arch.recurrence,
        "n_bins": model.arch.n_bins,
        "meta": model.meta,
    }
    container.write(path, MODEL_MAGIC, header, model.blocks())


def load_model(path) -> DrnnModel:
    header, arrays = container.read(path, MODEL_MAGIC)
    arch = Architecture(tuple(header["layer_sizes"]), header["recurrence"])
    return _from_blocks(arch, arrays, header.get("meta", {}))

"""Mini-batch L-BFGS training loop with dev-set model selection."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigurationError, NumericError
from ..model import DrnnModel, save_model
from .backprop import TrainingBatch, batch_loss, gradient
from .lbfgs import LbfgsState, lbfgs_step
from .losses import LossConfig

log = logging.getLogger(__name__)

LOG_FIELDS = ("iteration", "train_loss", "dev_loss", "grad_norm", "step_size", "elapsed_ms")


@dataclass(frozen=True)
class OptimizerConfig:
    """L-BFGS settings.

    An outer iteration is ``iterations_per_batch`` L-BFGS steps on one fixed
    mini-batch of ``minibatch_sequences`` sequences (0 means the whole set);
    the curvature history is reset whenever a new mini-batch is drawn.
    ``patience`` counts outer iterations without a dev-loss improvement.
    """

    max_iterations: int = 300
    history_size: int = 20
    minibatch_sequences: int = 0
    iterations_per_batch: int = 10
    seed: int = 0
    convergence_tol: float = 1e-9
    patience: int = 10

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be >= 0")
        for name in ("history_size", "iterations_per_batch", "patience"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.minibatch_sequences < 0:
            raise ConfigurationError("minibatch_sequences must be >= 0")
        if not self.convergence_tol > 0:
            raise ConfigurationError("convergence_tol must be positive")


@dataclass
class TrainResult:
    model: DrnnModel
    log: list
    events: list = field(default_factory=list)
    best_dev_loss: float = math.nan
    best_iteration: int = 0


def _mean_loss(model, batch, loss_cfg):
    return batch_loss(model, batch, loss_cfg) / max(len(batch), 1)


def train(model: DrnnModel, dataset: TrainingBatch, loss_cfg: LossConfig | None = None,
          opt_cfg: OptimizerConfig | None = None, dev_set: TrainingBatch | None = None,
          checkpoint=None) -> TrainResult:
    """Fit ``model`` to ``dataset`` and return the snapshot with the best dev loss.

    Without a dev set the training loss is used for selection.  ``checkpoint``
    is an optional path; the best model and an optimizer-state sidecar
    (``<path>.opt.json``) are written there at the end.
    """
    loss_cfg = loss_cfg or LossConfig()
    opt_cfg = opt_cfg or OptimizerConfig()
    if len(dataset) == 0:
        raise ConfigurationError("training set is empty")
    rng = np.random.default_rng(opt_cfg.seed)
    n_seq = len(dataset)
    full = opt_cfg.minibatch_sequences == 0 or opt_cfg.minibatch_sequences >= n_seq

    theta = model.flat()
    best_theta = theta.copy()
    selection = dev_set if dev_set is not None and len(dev_set) else None
    initial_sel = _mean_loss(model, selection if selection else dataset, loss_cfg)
    if not math.isfinite(initial_sel):
        raise NumericError("non-finite initial loss")
    best_dev, best_iter = initial_sel, 0
    rows, events = [], []
    state = LbfgsState(opt_cfg.history_size)
    t_start = time.perf_counter()
    it = 0
    stale_outer = 0
    batch = dataset
    f = g = None

    def objective(th):
        J, g = gradient(model.with_flat(th), batch, loss_cfg)
        return J / len(batch), g / len(batch)

    while it < opt_cfg.max_iterations and stale_outer < opt_cfg.patience:
        if not full:
            idx = np.sort(rng.choice(n_seq, size=opt_cfg.minibatch_sequences, replace=False))
            batch = dataset.subset(idx)
            state.reset()
            f = None
        if f is None:
            f, g = objective(theta)
        if not math.isfinite(f):
            raise NumericError(f"non-finite training loss at iteration {it}")
        improved = False
        converged = False
        for _ in range(opt_cfg.iterations_per_batch):
            if it >= opt_cfg.max_iterations:
                break
            theta_new, f_new, g_new, rec = lbfgs_step(objective, theta, f, g, state)
            if rec is None:
                events.append({"iteration": it + 1, "event": "no_descent"})
                converged = True
                break
            if rec.fallback:
                events.append({"iteration": it + 1, "event": "line_search_failed_steepest_descent"})
                log.info("iteration %d: line search failed, took steepest-descent step", it + 1)
            it += 1
            converged = abs(f - f_new) <= opt_cfg.convergence_tol * max(abs(f), 1.0)
            theta, f, g = theta_new, f_new, g_new
            current = model.with_flat(theta)
            dev = _mean_loss(current, selection, loss_cfg) if selection else f
            if not math.isfinite(dev):
                raise NumericError(f"non-finite dev loss at iteration {it}")
            if dev < best_dev:
                best_dev, best_iter, best_theta = dev, it, theta.copy()
                improved = True
            rows.append({
                "iteration": it,
                "train_loss": f,
                "dev_loss": dev,
                "grad_norm": float(np.linalg.norm(g)),
                "step_size": rec.step,
                "elapsed_ms": (time.perf_counter() - t_start) * 1000.0,
            })
            if converged:
                break
        stale_outer = 0 if improved else stale_outer + 1
        if converged and full:
            break

    best = model.with_flat(best_theta)
    result = TrainResult(best, rows, events, best_dev, best_iter)
    if checkpoint is not None:
        save_checkpoint(checkpoint, result, state, opt_cfg, loss_cfg)
    return result


def write_log_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.10g}" if isinstance(r[k], float) else r[k]) for k in LOG_FIELDS})


def save_checkpoint(path, result: TrainResult, state: LbfgsState, opt_cfg, loss_cfg) -> None:
    """Model container at ``path`` plus ``<path>.opt.json`` with optimizer state."""
    save_model(result.model, path)
    sidecar = {
        "iterations_done": result.log[-1]["iteration"] if result.log else 0,
        "best_iteration": result.best_iteration,
        "best_dev_loss": result.best_dev_loss,
        "optimizer": asdict(opt_cfg),
        "loss": asdict(loss_cfg),
        "history_s": [s.tolist() for s in state.s_hist],
        "history_y": [y.tolist() for y in state.y_hist],
        "events": result.events,
    }
    with open(f"{path}.opt.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, sort_keys=True)


def load_optimizer_state(path) -> dict:
    with open(f"{path}.opt.json", encoding="utf-8") as fh:
        data = json.load(fh)
    state = LbfgsState(data["optimizer"]["history_size"])
    for s, y in zip(data["history_s"], data["history_y"]):
        state.s_hist.append(np.asarray(s))
        state.y_hist.append(np.asarray(y))
    data["state"] = state
    return data

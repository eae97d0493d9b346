"""Squared-error and discriminative training objectives.

All functions take time-major ``(T, F)`` arrays: the network's estimates of
both sources and the corresponding clean targets.
"""
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DimensionError

DEFAULT_GAMMA = 0.05


@dataclass(frozen=True)
class LossConfig:
    gamma: float = DEFAULT_GAMMA
    use_masking_layer: bool = True

    def __post_init__(self):
        _check_gamma(self.gamma)


def _check_gamma(gamma):
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in [0, 1], got {gamma}")


def _check(*arrays):
    shape = np.shape(arrays[0])
    for a in arrays[1:]:
        if np.shape(a) != shape:
            raise DimensionError(f"shape mismatch: {shape} vs {np.shape(a)}")
    return [np.asarray(a, dtype=np.float64) for a in arrays]


def _sq(a):
    return float(np.sum(a * a))


def loss_mse(y1_est, y2_est, y1, y2) -> float:
    """0.5 * sum_t (||y1_est - y1||^2 + ||y2_est - y2||^2)."""
    y1_est, y2_est, y1, y2 = _check(y1_est, y2_est, y1, y2)
    return 0.5 * (_sq(y1_est - y1) + _sq(y2_est - y2))


def loss_discriminative(y1_est, y2_est, y1, y2, gamma=DEFAULT_GAMMA) -> float:
    """Squared error minus gamma times the cross-source squared error."""
    _check_gamma(gamma)
    y1_est, y2_est, y1, y2 = _check(y1_est, y2_est, y1, y2)
    direct = _sq(y1 - y1_est) + _sq(y2 - y2_est)
    cross = _sq(y1 - y2_est) + _sq(y2 - y1_est)
    return 0.5 * (direct - gamma * cross)


def log_likelihood(y1_est, y2_est, y1, y2) -> float:
    """ln p12(y) under unit-covariance Gaussian residuals (constant dropped)."""
    return -loss_mse(y1_est, y2_est, y1, y2)


def swap_divergence(y1_est, y2_est, y1, y2) -> float:
    """Point estimate of KL(p12 || p21), p21 swapping the source affiliation."""
    y1_est, y2_est, y1, y2 = _check(y1_est, y2_est, y1, y2)
    cross = _sq(y1 - y2_est) + _sq(y2 - y1_est)
    direct = _sq(y1 - y1_est) + _sq(y2 - y2_est)
    return 0.5 * (cross - direct)


def loss_and_grads(y1_est, y2_est, y1, y2, gamma=0.0):
    """Loss value and its gradients with respect to both estimates.

    ``gamma = 0`` is the plain squared error.
    """
    _check_gamma(gamma)
    r11 = y1_est - y1
    r22 = y2_est - y2
    r12 = y1_est - y2
    r21 = y2_est - y1
    loss = 0.5 * (_sq(r11) + _sq(r22))
    if gamma:
        loss -= 0.5 * gamma * (_sq(r12) + _sq(r21))
        return loss, r11 - gamma * r12, r22 - gamma * r21
    return loss, r11, r22

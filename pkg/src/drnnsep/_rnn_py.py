"""Pure-numpy versions of the recurrent-layer time recursions in ``_rnn.pyx``."""
import numpy as np


def rnn_forward(A, U, h0):
    """h_t = max(0, A_t + U h_{t-1}); returns (H, P) with P the pre-activations."""
    T, m = A.shape
    H = np.empty((T, m))
    P = np.empty((T, m))
    h = h0
    for t in range(T):
        p = A[t] + U @ h
        P[t] = p
        h = np.maximum(p, 0.0)
        H[t] = h
    return H, P


def rnn_backward(dH, P, U):
    """Back-propagate through time; returns dL/dP for every step."""
    T, m = dH.shape
    D = np.empty((T, m))
    carry = np.zeros(m)
    for t in range(T - 1, -1, -1):
        d = (dH[t] + carry) * (P[t] > 0.0)
        D[t] = d
        carry = U.T @ d
    return D

"""Backend selection for the recurrent-layer time recursions.

The compiled extension is used when it was built; set ``DRNNSEP_PURE_PYTHON=1``
to force the numpy fallback.  ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _rnn_py

if os.environ.get("DRNNSEP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _rnn_py
    BACKEND = "python"
else:
    try:
        from . import _rnn as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _rnn_py
        BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def rnn_forward(A, U, h0):
    return _impl.rnn_forward(_c(A), _c(U), _c(h0))


def rnn_backward(dH, P, U):
    return _impl.rnn_backward(_c(dH), _c(P), _c(U))

import os
import subprocess
import sys

import numpy as np
import pytest

from drnnsep import _rnn_py, kernels

try:
    from drnnsep import _rnn
except ImportError:  # extension not built
    _rnn = None

needs_ext = pytest.mark.skipif(_rnn is None, reason="compiled extension not available")


def _inputs(seed, T=40, m=7):
    rng = np.random.default_rng(seed)
    return (rng.standard_normal((T, m)), 0.4 * rng.standard_normal((m, m)),
            rng.uniform(size=m), rng.standard_normal((T, m)))


def test_fallback_forward_oracle():
    A, U, h0, _ = _inputs(0, T=3, m=2)
    H, P = _rnn_py.rnn_forward(A, U, h0)
    h = h0
    for t in range(3):
        p = A[t] + U @ h
        np.testing.assert_allclose(P[t], p)
        h = np.maximum(p, 0)
        np.testing.assert_allclose(H[t], h)


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_backends_agree(seed):
    A, U, h0, dH = _inputs(seed)
    Hc, Pc = _rnn.rnn_forward(A, U, h0)
    Hp, Pp = _rnn_py.rnn_forward(A, U, h0)
    np.testing.assert_allclose(Hc, Hp, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(Pc, Pp, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(_rnn.rnn_backward(dH, Pc, U), _rnn_py.rnn_backward(dH, Pp, U),
                               rtol=1e-13, atol=1e-13)


def test_wrapper_accepts_non_contiguous():
    A, U, h0, _ = _inputs(3)
    H, _ = kernels.rnn_forward(np.asfortranarray(A), U.T.copy().T, h0)
    np.testing.assert_allclose(H, _rnn_py.rnn_forward(A, U, h0)[0], atol=1e-13)


def test_environment_forces_fallback():
    env = dict(os.environ, DRNNSEP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import drnnsep.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"

"""Compare the compiled and pure-numpy recurrent kernels.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the forward and backward time recursions on their own, then one full
BPTT gradient of an sRNN with each backend swapped in.
"""
import argparse
import time

import numpy as np

from drnnsep import _rnn_py, kernels
from drnnsep.model import Architecture, init_model
from drnnsep.training.backprop import Sequence, TrainingBatch, gradient
from drnnsep.training.losses import LossConfig

try:
    from drnnsep import _rnn
except ImportError:
    _rnn = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_recursion(impl, T, m, repeat):
    rng = np.random.default_rng(0)
    A = rng.standard_normal((T, m))
    U = 0.05 * rng.standard_normal((m, m))
    h0 = np.zeros(m)
    dH = rng.standard_normal((T, m))

    def run():
        _, P = impl.rnn_forward(A, U, h0)
        impl.rnn_backward(dH, P, U)

    return best_of(run, repeat)


def bench_gradient(impl, T, m, repeat):
    rng = np.random.default_rng(1)
    F = 129
    model = init_model(Architecture((F, m, m, 2 * F), "all"), 0)
    seqs = [Sequence(rng.uniform(size=(T, F)), rng.uniform(size=(T, F)),
                     rng.uniform(size=(T, F)), rng.uniform(size=(T, F))) for _ in range(4)]
    batch = TrainingBatch(seqs)
    saved = kernels._impl
    kernels._impl = impl
    try:
        return best_of(lambda: gradient(model, batch, LossConfig(0.05)), repeat)
    finally:
        kernels._impl = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _rnn_py)] + ([("cython", _rnn)] if _rnn is not None else [])
    if _rnn is None:
        print("compiled extension not built; only the numpy fallback is timed")
    print(f"{'case':<32}" + "".join(f"{n:>12}" for n, _ in backends) + ("     speedup" if len(backends) == 2 else ""))
    cases = [("recursion T=100 m=64", bench_recursion, 100, 64),
             ("recursion T=100 m=300", bench_recursion, 100, 300),
             ("recursion T=500 m=32", bench_recursion, 500, 32),
             ("sRNN gradient 4x100 frames m=64", bench_gradient, 100, 64),
             ("sRNN gradient 4x100 frames m=300", bench_gradient, 100, 300)]
    for label, fn, T, m in cases:
        ts = [fn(impl, T, m, args.repeat) for _, impl in backends]
        line = f"{label:<32}" + "".join(f"{t * 1e3:>10.2f}ms" for t in ts)
        if len(ts) == 2:
            line += f"{ts[0] / ts[1]:>11.2f}x"
        print(line)


if __name__ == "__main__":
    main()

"""Acceptance suite: one test per release criterion.

Each test records a one-line verdict through the ``criterion`` fixture; the
lines are printed together at the end of the pytest run (see conftest.py).
Criteria 7 to 10 run the example sweeps in ``configs/`` through the CLI, so
this module takes several minutes.
"""
import csv
import time
from pathlib import Path

import numpy as np
import pytest

from drnnsep.evaluation import bss_eval, decompose
from drnnsep.harness.cli import main
from drnnsep.model import Architecture, init_model, masked_forward
from drnnsep.nmf import nmf_fit
from drnnsep.signal import AudioClip, StftConfig, istft, stft
from drnnsep.training.backprop import Sequence, TrainingBatch, batch_loss, gradient
from drnnsep.training.losses import LossConfig, loss_discriminative, loss_mse

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RECURRENCES = {"DNN": "none", "DRNN-1": 1, "DRNN-2": 2, "sRNN": "all"}


def _fd_instance(rec, seed, d_in=12, hidden=8, F=6, T=12):
    rng = np.random.default_rng(seed)
    m = init_model(Architecture((d_in, hidden, hidden, 2 * F), rec), seed)
    m = m.with_flat(m.flat() + 0.1 * rng.standard_normal(m.n_params))
    # output biases of order one keep |y1^| + |y2^| away from the mask's kink
    m.b[-1][:] = rng.choice([-1.0, 1.0], 2 * F) * rng.uniform(0.5, 1.5, 2 * F)
    seq = Sequence(rng.standard_normal((T, d_in)), rng.uniform(size=(T, F)),
                   rng.uniform(size=(T, F)), rng.uniform(size=(T, F)))
    return m, TrainingBatch([seq])


def test_criterion_01_gradient_oracle(criterion):
    start = time.perf_counter()
    worst = 0.0
    for i, (name, rec) in enumerate(RECURRENCES.items()):
        for gamma in (0.0, 0.05):
            m, batch = _fd_instance(rec, 100 + i)
            cfg = LossConfig(gamma, use_masking_layer=True)
            _, g = gradient(m, batch, cfg)
            theta = m.flat()
            rng = np.random.default_rng(200 + i)
            for _ in range(50):
                d = rng.standard_normal(theta.size)
                d /= np.linalg.norm(d)
                fd = (batch_loss(m.with_flat(theta + 1e-5 * d), batch, cfg)
                      - batch_loss(m.with_flat(theta - 1e-5 * d), batch, cfg)) / 2e-5
                an = float(g @ d)
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-300))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 60.0
    criterion(1, ok, f"max relative error {worst:.2e} over 8 x 50 directions, {elapsed:.1f} s")
    assert ok


def test_criterion_02_mask_sum(criterion):
    rng = np.random.default_rng(2)
    worst = 0.0
    recs = list(RECURRENCES.values())
    for i in range(1000):
        T, F, d_in = rng.integers(1, 10), rng.integers(1, 6), rng.integers(1, 6)
        m = init_model(Architecture((d_in, 7, 7, 2 * F), recs[i % 4]), i)
        m = m.with_flat(m.flat() + rng.standard_normal(m.n_params))
        z = rng.uniform(size=(T, F)) * 10.0 ** rng.uniform(-3, 3)
        tr = masked_forward(m, rng.standard_normal((T, d_in)), z)
        worst = max(worst, float(np.max(np.abs(tr.y1_tilde + tr.y2_tilde - z) / z)))
    ok = worst <= 1e-9
    criterion(2, ok, f"max relative violation {worst:.2e} over 1000 instances")
    assert ok


def test_criterion_03_objective_degeneracy(criterion):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        shape = tuple(rng.integers(1, 20, size=2))
        y1h, y2h, y1, y2 = (rng.standard_normal(shape) for _ in range(4))
        a, b = loss_discriminative(y1h, y2h, y1, y2, 0.0), loss_mse(y1h, y2h, y1, y2)
        worst = max(worst, abs(a - b) / abs(b))
    ok = worst <= 1e-12
    criterion(3, ok, f"max relative difference {worst:.2e} over 200 instances")
    assert ok


def test_criterion_04_stft_round_trip(criterion):
    rng = np.random.default_rng(4)
    cfg = StftConfig(1024, 512)
    worst = 0.0
    for _ in range(100):
        clip = AudioClip(rng.uniform(-1, 1, 16000), 16000)
        back = istft(stft(clip, cfg))
        worst = max(worst, float(np.max(np.abs(back.samples - clip.samples))))
    ok = worst < 1e-6
    criterion(4, ok, f"max abs error {worst:.2e} over 100 one-second clips")
    assert ok


def _normal_equations(est, refs, target):
    A = np.stack(refs, axis=1)
    p_all = A @ np.linalg.solve(A.T @ A, A.T @ est)
    t = refs[target]
    s_t = t * (t @ est) / (t @ t)
    return s_t, p_all - s_t, est - p_all


def test_criterion_05_bss_eval_oracle(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(200, 2000))
        refs = [rng.standard_normal(n), rng.standard_normal(n)]
        est = rng.uniform(-1, 1) * refs[0] + rng.uniform(-1, 1) * refs[1] + rng.standard_normal(n)
        for got, ref in zip(decompose(est, refs, i % 2), _normal_equations(est, refs, i % 2)):
            worst = max(worst, abs(got @ got - ref @ ref) / (ref @ ref))
    q, _ = np.linalg.qr(rng.standard_normal((16000, 2)))
    sir = bss_eval(q[:, 0] + 0.1 * q[:, 1], [q[:, 0], q[:, 1]], 0).sir
    ok = worst <= 1e-9 and abs(sir - 20.0) <= 0.01
    criterion(5, ok, f"max relative energy error {worst:.2e}; analytic SIR {sir:.4f} dB")
    assert ok


def test_criterion_06_nmf_monotone(criterion):
    rng = np.random.default_rng(6)
    worst = -np.inf
    for i in range(50):
        F, T = rng.integers(2, 40, size=2)
        V = rng.uniform(size=(F, T)) * (rng.uniform(size=(F, T)) > 0.2)
        V[0, 0] += 1.0
        _, _, obj = nmf_fit(V, int(rng.integers(1, 10)), iterations=200, seed=i)
        rises = np.diff(obj) - 1e-10 * np.abs(obj[:-1])
        worst = max(worst, float(np.max(rises)))
    ok = worst <= 0.0
    criterion(6, ok, f"largest step increase beyond slack {worst:.2e} over 50 matrices")
    assert ok


# -- end-to-end sweeps ---------------------------------------------------------

def _run(name, out):
    start = time.perf_counter()
    rc = main(["sweep", "--config", str(CONFIGS / f"{name}.ini"), "--out", str(out)])
    elapsed = time.perf_counter() - start
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {"rc": rc, "elapsed": elapsed, "rows": rows, "out": out}


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    """Each example sweep, run twice in separate directories."""
    cache = {}

    def get(name, run=0):
        if (name, run) not in cache:
            cache[name, run] = _run(name, tmp_path_factory.mktemp(f"{name}_{run}"))
        return cache[name, run]

    return get


def _score(rows, model, condition, metric, source):
    for r in rows:
        if r["model"] == model and r["condition"] == condition and r["source"] == str(source):
            return float(r[metric])
    raise KeyError((model, condition, metric, source))


def _mean(rows, model, condition, metric):
    return 0.5 * (_score(rows, model, condition, metric, 1) + _score(rows, model, condition, metric, 2))


def test_criterion_07_disjoint_band(criterion, sweeps):
    res = sweeps("disjoint_band")
    rows = res["rows"]
    sdr = [_score(rows, "disjoint_band", "matched", "GSDR", s) for s in (1, 2)]
    irm = [_score(rows, "irm", "matched", "GSDR", s) for s in (1, 2)]
    ok = res["rc"] == 0 and min(sdr) >= 15.0 and min(irm) >= 25.0 and res["elapsed"] < 900
    criterion(7, ok, f"DNN SDR {sdr[0]:.2f}/{sdr[1]:.2f} dB, IRM SDR {irm[0]:.2f}/{irm[1]:.2f} dB, "
                     f"{res['elapsed']:.0f} s")
    assert ok


def test_criterion_08_orderings(criterion, sweeps):
    res = sweeps("orderings")
    rows = res["rows"]
    joint = _mean(rows, "joint", "matched", "GSDR")
    margin_a = joint - _mean(rows, "separate_mask", "matched", "GSDR")
    sir_gain = [_score(rows, "discriminative", "matched", "GSIR", s)
                - _score(rows, "joint", "matched", "GSIR", s) for s in (1, 2)]
    margin_c = joint - _mean(rows, "nmf", "matched", "GSDR")
    ok = res["rc"] == 0 and margin_a > 1.0 and min(sir_gain) >= 0.0 and margin_c > 1.0
    criterion(8, ok, f"(a) joint - separate mask {margin_a:+.2f} dB SDR; "
                     f"(b) SIR gain at gamma=0.05 {sir_gain[0]:+.2f}/{sir_gain[1]:+.2f} dB; "
                     f"(c) DNN - NMF {margin_c:+.2f} dB SDR")
    assert res["rc"] == 0
    assert margin_a > 1.0
    assert min(sir_gain) >= 0.0
    assert margin_c > 1.0


def test_criterion_09_mismatch(criterion, sweeps):
    res = sweeps("mismatch")
    rows = res["rows"]
    matched = _mean(rows, "mismatch", "matched", "GSDR")
    unseen = _mean(rows, "mismatch", "unseen", "GSDR")
    ok = res["rc"] == 0 and unseen < matched
    criterion(9, ok, f"matched SDR {matched:.2f} dB, held-out generator SDR {unseen:.2f} dB")
    assert ok


def test_criterion_10_determinism(criterion, sweeps):
    differing = []
    for name in ("disjoint_band", "orderings", "mismatch"):
        first, second = sweeps(name, 0), sweeps(name, 1)
        for fname in ("per_clip.csv", "summary.csv"):
            if (first["out"] / fname).read_bytes() != (second["out"] / fname).read_bytes():
                differing.append(f"{name}/{fname}")
    ok = not differing
    criterion(10, ok, "per_clip.csv and summary.csv byte-identical across reruns"
              if ok else "differing: " + ", ".join(differing))
    assert ok

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drnnsep.errors import DegenerateInputError, DimensionError
from drnnsep.evaluation import (
    CAP_DB,
    PER_CLIP_FIELDS,
    bss_eval,
    decompose,
    global_scores,
    nsdr,
    read_csv,
    sdr,
    write_csv,
)
from drnnsep.signal import AudioClip


def _orthonormal_sources(rng, n=1000):
    q, _ = np.linalg.qr(rng.standard_normal((n, 2)))
    return q[:, 0], q[:, 1]


def normal_equations_oracle(est, refs, target):
    """Projection via explicit Gram matrix solve rather than a least-squares routine."""
    A = np.stack(refs, axis=1)
    G = A.T @ A
    coef = np.linalg.solve(G, A.T @ est)
    p_all = A @ coef
    t = refs[target]
    s_t = t * (t @ est) / (t @ t)
    return s_t, p_all - s_t, est - p_all


def test_exact_estimate_hits_cap():
    s1, s2 = _orthonormal_sources(np.random.default_rng(0))
    sc = bss_eval(s1, [s1, s2], 0)
    assert sc.sdr == sc.sir == sc.sar == CAP_DB


def test_twenty_db_interference():
    s1, s2 = _orthonormal_sources(np.random.default_rng(1))
    sc = bss_eval(s1 + 0.1 * s2, [s1, s2], 0)
    assert sc.sir == pytest.approx(20.0, abs=1e-9)
    assert sc.sdr == pytest.approx(20.0, abs=1e-9)
    assert sc.sar == CAP_DB


@pytest.mark.parametrize("seed", range(10))
def test_decomposition_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    s1, s2 = rng.standard_normal(500), rng.standard_normal(500)
    est = rng.standard_normal(500)
    got = decompose(est, [s1, s2], 1)
    ref = normal_equations_oracle(est, [s1, s2], 1)
    for g, r in zip(got, ref):
        assert abs(g @ g - r @ r) <= 1e-9 * (r @ r)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_parts_are_orthogonal_and_add_up(seed):
    rng = np.random.default_rng(seed)
    refs = [rng.standard_normal(300), rng.standard_normal(300)]
    est = rng.standard_normal(300)
    s_t, e_i, e_a = decompose(est, refs, 0)
    np.testing.assert_allclose(s_t + e_i + e_a, est, atol=1e-12)
    total = est @ est
    assert abs(s_t @ e_a) <= 1e-9 * total
    assert abs(e_i @ e_a) <= 1e-9 * total


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(1e-3, 1e3))
def test_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    refs = [rng.standard_normal(200), rng.standard_normal(200)]
    est = refs[0] + 0.3 * rng.standard_normal(200)
    a, b = bss_eval(est, refs, 0), bss_eval(scale * est, refs, 0)
    assert a.sdr == pytest.approx(b.sdr, abs=1e-8)
    assert a.sir == pytest.approx(b.sir, abs=1e-8)
    assert a.sar == pytest.approx(b.sar, abs=1e-8)


def test_silent_target():
    with pytest.raises(DegenerateInputError):
        bss_eval(np.ones(5), [np.zeros(5), np.ones(5)], 0)


def test_length_mismatch():
    with pytest.raises(DimensionError):
        bss_eval(np.ones(5), [np.ones(6), np.ones(6)], 0)


def test_sample_rate_mismatch():
    with pytest.raises(DimensionError):
        bss_eval(AudioClip(np.ones(5), 8000), [AudioClip(np.ones(5), 16000), np.ones(5)], 0)


class TestNsdr:
    def test_mixture_gives_zero(self):
        rng = np.random.default_rng(3)
        v, x = rng.standard_normal(400), rng.standard_normal(400)
        assert nsdr(x, v, x) == 0.0

    def test_clean_estimate(self):
        rng = np.random.default_rng(4)
        v, w = rng.standard_normal(400), rng.standard_normal(400)
        x = v + w
        assert nsdr(v, v, x) == pytest.approx(CAP_DB - sdr(x, v, x))
        assert nsdr(v, v, x) > 0

    def test_subtraction(self):
        v, w = _orthonormal_sources(np.random.default_rng(5))
        x = v + w  # SDR(x, v) = 0 dB
        est = v + 10 ** (-12 / 20) * w  # 12 dB SDR
        assert sdr(x, v, x) == pytest.approx(0.0, abs=1e-9)
        assert nsdr(est, v, x) == pytest.approx(12.0, abs=1e-9)


class TestGlobalScores:
    def test_single_clip(self):
        g = global_scores([(3.0, 10.0, 5.0, 100)])
        assert (g.gnsdr, g.gsir, g.gsar) == (3.0, 10.0, 5.0)

    def test_length_weighting(self):
        g = global_scores([(0.0, 0.0, 0.0, 100), (10.0, 20.0, 30.0, 300)])
        assert (g.gnsdr, g.gsir, g.gsar) == (7.5, 15.0, 22.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            global_scores([])

    def test_non_positive_length(self):
        with pytest.raises(ValueError):
            global_scores([(1.0, 1.0, 1.0, 0)])


def test_csv_round_trip(tmp_path):
    rows = [{"clip_id": "a,b", "source": 1, "sdr": 1.0 / 3, "sir": 2.0, "sar": 3.0, "nsdr": 0.5, "len_samples": 10}]
    write_csv(tmp_path / "x.csv", rows, PER_CLIP_FIELDS)
    raw = (tmp_path / "x.csv").read_bytes()
    assert raw.startswith(b"clip_id,source,sdr,sir,sar,nsdr,len_samples\r\n")
    assert b'"a,b",1,0.333333,' in raw
    back = read_csv(tmp_path / "x.csv")
    assert back[0]["clip_id"] == "a,b" and float(back[0]["sdr"]) == pytest.approx(1 / 3, abs=1e-6)

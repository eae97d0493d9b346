import json
import struct
import zlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drnnsep import container
from drnnsep.errors import ConfigurationError, DimensionError, FormatError
from drnnsep.model import (
    MODEL_MAGIC,
    Architecture,
    DrnnModel,
    apply_mask_separately,
    forward,
    init_model,
    load_model,
    masked_forward,
    save_model,
    soft_mask,
)

FIXTURES = Path(__file__).parent / "fixtures"
RECURRENCES = ["none", 1, 2, "all"]


def reference_forward(model, x, h0=None):
    """Scalar-loop evaluation of the layer equations, one unit at a time."""
    arch = model.arch
    sizes = arch.layer_sizes
    L = arch.n_hidden
    T = x.shape[0]
    h0 = h0 or {}
    prev_state = {k: list(h0.get(k, np.zeros(sizes[k]))) for k in range(1, L + 1)}
    hidden_all = []
    outputs = []
    for t in range(T):
        below = list(x[t])
        per_layer = []
        for k in range(1, L + 1):
            W, b = model.W[k - 1], model.b[k - 1]
            U = model.U[k - 1]
            cur = []
            for i in range(sizes[k]):
                acc = b[i]
                for j in range(sizes[k - 1]):
                    acc += W[i, j] * below[j]
                if U is not None:
                    for j in range(sizes[k]):
                        acc += U[i, j] * prev_state[k][j]
                cur.append(acc if acc > 0 else 0.0)
            prev_state[k] = cur
            per_layer.append(cur)
            below = cur
        Wo, bo = model.W[L], model.b[L]
        out = []
        for i in range(sizes[-1]):
            acc = bo[i]
            for j in range(sizes[L]):
                acc += Wo[i, j] * below[j]
            out.append(acc)
        hidden_all.append(per_layer)
        outputs.append(out)
    return np.array(outputs), hidden_all


def _random_model(rec, seed=0, sizes=(4, 5, 5, 6)):
    m = init_model(Architecture(sizes, rec), seed)
    rng = np.random.default_rng(seed + 100)
    return m.with_flat(m.flat() + 0.2 * rng.standard_normal(m.n_params))


class TestArchitecture:
    def test_named(self):
        a = Architecture.named("drnn-2", 10, [8, 8], 3)
        assert a.layer_sizes == (10, 8, 8, 6)
        assert a.recurrence == 2 and a.name == "drnn-2"
        assert Architecture.named("srnn", 10, [8, 8], 3).is_recurrent(1)
        assert not Architecture.named("dnn", 10, [8], 3).is_recurrent(1)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            Architecture((4, 5, 6), 2)
        with pytest.raises(ConfigurationError):
            Architecture((4, 5, 7), "none")
        with pytest.raises(ConfigurationError):
            Architecture((4, 6), "none")


class TestForward:
    @pytest.mark.parametrize("rec", RECURRENCES)
    def test_zero_model_outputs_zero(self, rec):
        m = init_model(Architecture((4, 5, 5, 6), rec), 0)
        m = m.with_flat(np.zeros(m.n_params))
        tr = forward(m, np.random.default_rng(0).standard_normal((7, 4)))
        assert not np.any(tr.y1_hat) and not np.any(tr.y2_hat)

    @pytest.mark.parametrize("layer", [1, 2])
    def test_zero_recurrence_equals_dnn(self, layer):
        dnn = _random_model("none", 3)
        U = [None, None]
        U[layer - 1] = np.zeros((5, 5))
        drnn = DrnnModel(Architecture((4, 5, 5, 6), layer), dnn.W, U, dnn.b)
        x = np.random.default_rng(1).standard_normal((9, 4))
        np.testing.assert_array_equal(forward(drnn, x).output, forward(dnn, x).output)

    @pytest.mark.parametrize("rec", RECURRENCES)
    def test_matches_scalar_reference(self, rec):
        m = _random_model(rec, 4)
        x = np.random.default_rng(2).standard_normal((4, 4))
        h0 = {k: np.random.default_rng(k).uniform(0, 1, 5) for k in (1, 2) if m.arch.is_recurrent(k)}
        tr = forward(m, x, h0)
        out, hidden = reference_forward(m, x, h0)
        np.testing.assert_allclose(tr.output, out, rtol=1e-12, atol=1e-12)
        for k in range(2):
            np.testing.assert_allclose(tr.hidden[k], [hidden[t][k] for t in range(4)], atol=1e-12)
        np.testing.assert_array_equal(tr.y1_hat, tr.output[:, :3])
        np.testing.assert_array_equal(tr.y2_hat, tr.output[:, 3:])

    def test_input_dimension_checked(self):
        with pytest.raises(DimensionError):
            forward(_random_model("none"), np.zeros((3, 5)))

    def test_h0_dimension_checked(self):
        with pytest.raises(DimensionError):
            forward(_random_model(1), np.zeros((3, 4)), {1: np.zeros(4)})

    def test_permuting_frames_permutes_dnn_output(self):
        m = _random_model("none", 5)
        x = np.random.default_rng(3).standard_normal((11, 4))
        perm = np.random.default_rng(4).permutation(11)
        np.testing.assert_allclose(forward(m, x[perm]).output, forward(m, x).output[perm], atol=1e-14)

    def test_recurrent_output_depends_on_history(self):
        m = _random_model("all", 6)
        x = np.random.default_rng(5).standard_normal((6, 4))
        a = forward(m, x).output
        b = forward(m, x[::-1]).output[::-1]
        assert not np.allclose(a, b)

    def test_hidden_activations_are_rectified(self):
        m = _random_model("all", 7)
        tr = forward(m, np.random.default_rng(6).standard_normal((10, 4)))
        for p, h in zip(tr.pre, tr.hidden):
            np.testing.assert_array_equal(h, np.maximum(p, 0.0))
            np.testing.assert_array_equal(np.maximum(h, 0.0), h)


class TestMask:
    def test_equal_predictions(self):
        np.testing.assert_array_equal(soft_mask([3.0, -1.0], [3.0, 1.0]), [0.5, 0.5])

    def test_direct_formula(self):
        np.testing.assert_array_equal(soft_mask([2.0, 0.0], [2.0, 4.0]), [0.5, 0.0])

    def test_zero_denominator(self):
        np.testing.assert_array_equal(soft_mask([0.0, 1.0], [0.0, 0.0]), [0.5, 1.0])

    def test_apply_separately(self):
        s1, s2 = apply_mask_separately(np.ones(3), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(s1, [1, 2, 3])
        np.testing.assert_array_equal(s2, [0, 0, 0])
        s1, s2 = apply_mask_separately([0.5, 0.5], [4.0, 2.0])
        np.testing.assert_array_equal(s1, [2, 1])
        np.testing.assert_array_equal(s2, [2, 1])

    def test_apply_separately_readds(self):
        rng = np.random.default_rng(7)
        m, z = rng.uniform(size=50), rng.uniform(0, 10, size=50)
        s1, s2 = apply_mask_separately(m, z)
        assert np.max(np.abs(s1 + s2 - z)) <= 1e-12

    def test_apply_separately_shape(self):
        with pytest.raises(DimensionError):
            apply_mask_separately(np.ones(3), np.ones(4))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=20))
    def test_mask_range(self, pairs):
        a, b = np.array(pairs).T
        m = soft_mask(a, b)
        assert np.all((m >= 0) & (m <= 1))


def _constant_output_model(y1, y2, d_in=3):
    F = len(y1)
    m = init_model(Architecture((d_in, 2, 2 * F), "none"), 0)
    m = m.with_flat(np.zeros(m.n_params))
    m.b[-1][:] = np.concatenate([y1, y2])
    return m


class TestMaskedForward:
    def test_arithmetic(self):
        m = _constant_output_model([2.0, 0.0], [2.0, 4.0])
        tr = masked_forward(m, np.ones((1, 3)), np.array([[10.0, 8.0]]))
        np.testing.assert_array_equal(tr.y1_tilde, [[5.0, 0.0]])
        np.testing.assert_array_equal(tr.y2_tilde, [[5.0, 8.0]])
        np.testing.assert_array_equal(tr.mask, [[0.5, 0.0]])

    @pytest.mark.parametrize("rec", RECURRENCES)
    def test_zero_mixture(self, rec):
        tr = masked_forward(_random_model(rec), np.ones((5, 4)), np.zeros((5, 3)))
        assert not np.any(tr.y1_tilde) and not np.any(tr.y2_tilde)

    def test_shape_checked(self):
        with pytest.raises(DimensionError):
            masked_forward(_random_model("none"), np.ones((5, 4)), np.zeros((4, 3)))

    @settings(max_examples=40, deadline=None)
    @given(
        rec=st.sampled_from(RECURRENCES),
        seed=st.integers(0, 10**6),
        T=st.integers(1, 15),
        scale=st.floats(1e-3, 1e3),
    )
    def test_mask_sum_constraint(self, rec, seed, T, scale):
        rng = np.random.default_rng(seed)
        m = _random_model(rec, seed % 1000)
        z = scale * rng.uniform(size=(T, 3))
        tr = masked_forward(m, rng.standard_normal((T, 4)), z)
        assert np.all(np.abs(tr.y1_tilde + tr.y2_tilde - z) <= 1e-9 * np.abs(z) + 1e-300)
        assert np.all((tr.mask >= 0) & (tr.mask <= 1))


class TestSerialization:
    @pytest.mark.parametrize("rec", RECURRENCES)
    def test_round_trip(self, tmp_path, rec):
        m = _random_model(rec, 8)
        m.meta = {"feature_kind": "spectra", "fft_size": 1024}
        save_model(m, tmp_path / "m.drnn")
        back = load_model(tmp_path / "m.drnn")
        assert back.arch == m.arch
        assert back.meta == m.meta
        for (n1, a1), (n2, a2) in zip(m.blocks(), back.blocks()):
            assert n1 == n2
            np.testing.assert_array_equal(a1, a2)

    def test_byte_identical_saves(self, tmp_path):
        m = _random_model(1, 9)
        save_model(m, tmp_path / "a")
        save_model(load_model(tmp_path / "a"), tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_corrupt_magic(self, tmp_path):
        save_model(_random_model("none"), tmp_path / "m")
        data = bytearray((tmp_path / "m").read_bytes())
        data[:8] = b"XXXXXXXX"
        (tmp_path / "m").write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_model(tmp_path / "m")

    def test_checksum(self, tmp_path):
        save_model(_random_model("none"), tmp_path / "m")
        data = bytearray((tmp_path / "m").read_bytes())
        data[-20] ^= 0xFF
        (tmp_path / "m").write_bytes(bytes(data))
        with pytest.raises(FormatError, match="checksum"):
            load_model(tmp_path / "m")

    def test_truncated(self, tmp_path):
        save_model(_random_model("none"), tmp_path / "m")
        data = (tmp_path / "m").read_bytes()
        for cut in (5, 40, len(data) - 9):
            (tmp_path / "t").write_bytes(data[:cut])
            with pytest.raises(FormatError):
                load_model(tmp_path / "t")

    def _rewrite_version(self, path, version):
        header, arrays = container.read(path, MODEL_MAGIC)
        header["format_version"] = version
        header.pop("blocks")
        names = [n for n in arrays]
        container.write(path, MODEL_MAGIC, header, [(n, arrays[n]) for n in names])

    def test_later_minor_version_loads(self, tmp_path):
        m = _random_model(2, 10)
        save_model(m, tmp_path / "m")
        self._rewrite_version(tmp_path / "m", "1.7")
        np.testing.assert_array_equal(load_model(tmp_path / "m").flat(), m.flat())

    def test_major_version_mismatch(self, tmp_path):
        save_model(_random_model(2, 10), tmp_path / "m")
        self._rewrite_version(tmp_path / "m", "2.0")
        with pytest.raises(FormatError, match="version"):
            load_model(tmp_path / "m")

    def test_committed_v1_fixture(self):
        path = FIXTURES / "model_v1_0.drnn"
        raw = path.read_bytes()
        assert raw[:8] == MODEL_MAGIC
        (hlen,) = struct.unpack("<I", raw[8:12])
        header = json.loads(raw[12:12 + hlen])
        assert header["format_version"] == "1.0"
        assert zlib.crc32(raw[8:-4]) == struct.unpack("<I", raw[-4:])[0]
        m = load_model(path)
        expected = init_model(Architecture((4, 5, 5, 6), 1), seed=7)
        assert m.arch == expected.arch
        np.testing.assert_array_equal(m.flat(), expected.flat())
        assert m.meta == {"feature_kind": "spectra", "context_frames": 1}

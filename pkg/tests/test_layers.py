import math

import numpy as np
import pytest

import infill.tensor as T
from infill.errors import ConfigError, ShapeError
from infill.layers import (
    Linear, LayerNorm, MultiHeadAttention, causal_mask, key_padding_mask,
)


@pytest.fixture
def f64():
    with T.use_dtype("float64"):
        yield


def set_identity(linear):
    linear.w.data = np.eye(*linear.w.shape, dtype=linear.w.data.dtype)
    linear.b.data = np.zeros_like(linear.b.data)


class TestLinear:
    def test_matches_oracle(self, f64):
        rng = np.random.default_rng(0)
        lin = Linear(rng, 3, 4)
        x = T.Tensor(rng.normal(size=(5, 3)))
        np.testing.assert_allclose(
            lin(x).numpy(), x.numpy() @ lin.w.numpy() + lin.b.numpy(), rtol=1e-12)

    def test_leading_dims(self, f64):
        rng = np.random.default_rng(1)
        lin = Linear(rng, 3, 2)
        x = T.Tensor(rng.normal(size=(2, 5, 3)))
        out = lin(x)
        assert out.shape == (2, 5, 2)
        np.testing.assert_allclose(
            out.numpy()[1], x.numpy()[1] @ lin.w.numpy() + lin.b.numpy(), rtol=1e-12)

    def test_no_bias(self, f64):
        lin = Linear(np.random.default_rng(2), 3, 2, bias=False)
        assert lin.b is None
        assert set(lin.params("p")) == {"p.w"}


class TestMasks:
    def test_causal(self):
        m = causal_mask(3)
        assert m.shape == (1, 1, 3, 3)
        visible = m[0, 0] == 0.0
        np.testing.assert_array_equal(visible, np.tril(np.ones((3, 3), dtype=bool)))

    def test_key_padding(self):
        m = key_padding_mask(np.array([[1, 1, 0], [1, 0, 0]]))
        assert m.shape == (2, 1, 1, 3)
        np.testing.assert_array_equal(m[:, 0, 0] == 0.0,
                                      [[True, True, False], [True, False, False]])


class TestMultiHeadAttention:
    def test_single_position_is_value_projection(self, f64):
        rng = np.random.default_rng(3)
        mha = MultiHeadAttention(rng, 6, 2)
        x = T.Tensor(rng.normal(size=(1, 1, 6)))
        out = mha(x, x, x)
        expected = mha.wo(mha.wv(x))
        np.testing.assert_allclose(out.numpy(), expected.numpy(), rtol=1e-12)

    def test_two_token_hand_computed(self, f64):
        """Identity projections, x = I2: weights follow from e^(1/sqrt 2)."""
        mha = MultiHeadAttention(np.random.default_rng(4), 2, 1)
        for lin in (mha.wq, mha.wk, mha.wv, mha.wo):
            set_identity(lin)
        x = T.Tensor(np.eye(2)[None])
        out = mha(x, x, x).numpy()[0]
        # scores = x @ x.T / sqrt(2) = I/sqrt(2); per row the diagonal weight
        # is e^s/(e^s+1) with s = 1/sqrt(2), the off-diagonal 1/(e^s+1)
        s = 1.0 / math.sqrt(2.0)
        hi = math.exp(s) / (math.exp(s) + 1.0)
        lo = 1.0 / (math.exp(s) + 1.0)
        np.testing.assert_allclose(out, [[hi, lo], [lo, hi]], rtol=0, atol=1e-15)

    def test_matches_numpy_reference(self, f64):
        """Full multi-head case against an independently coded formula."""
        rng = np.random.default_rng(5)
        B, S, d, H = 2, 4, 6, 3
        mha = MultiHeadAttention(rng, d, H)
        x = rng.normal(size=(B, S, d))
        out = mha(T.Tensor(x), T.Tensor(x), T.Tensor(x)).numpy()

        q = x @ mha.wq.w.numpy() + mha.wq.b.numpy()
        k = x @ mha.wk.w.numpy() + mha.wk.b.numpy()
        v = x @ mha.wv.w.numpy() + mha.wv.b.numpy()
        dh = d // H
        want = np.zeros_like(x)
        for h in range(H):
            sl = slice(h * dh, (h + 1) * dh)
            scores = q[:, :, sl] @ k[:, :, sl].transpose(0, 2, 1) / math.sqrt(dh)
            e = np.exp(scores - scores.max(-1, keepdims=True))
            w = e / e.sum(-1, keepdims=True)
            want[:, :, sl] = w @ v[:, :, sl]
        want = want @ mha.wo.w.numpy() + mha.wo.b.numpy()
        np.testing.assert_allclose(out, want, rtol=1e-10)

    def test_masked_key_equals_removed_key(self, f64):
        """Hiding a key with -1e9 matches physically deleting it."""
        rng = np.random.default_rng(6)
        mha = MultiHeadAttention(rng, 4, 2)
        q = T.Tensor(rng.normal(size=(1, 1, 4)))
        kv = rng.normal(size=(1, 3, 4))
        mask = np.zeros((1, 1, 1, 3))
        mask[..., 2] = -1e9
        masked = mha(q, T.Tensor(kv), T.Tensor(kv), mask).numpy()
        removed = mha(q, T.Tensor(kv[:, :2]), T.Tensor(kv[:, :2])).numpy()
        np.testing.assert_allclose(masked, removed, rtol=0, atol=1e-12)

    def test_causal_mask_blocks_future(self, f64):
        rng = np.random.default_rng(7)
        mha = MultiHeadAttention(rng, 4, 1)
        x = rng.normal(size=(1, 3, 4))
        y = x.copy()
        y[0, 2] += 1.0
        m = causal_mask(3)
        a = mha(T.Tensor(x), T.Tensor(x), T.Tensor(x), m).numpy()
        b = mha(T.Tensor(y), T.Tensor(y), T.Tensor(y), m).numpy()
        np.testing.assert_array_equal(a[0, :2], b[0, :2])
        assert not np.array_equal(a[0, 2], b[0, 2])

    def test_bad_heads_rejected(self):
        with pytest.raises(ConfigError):
            MultiHeadAttention(np.random.default_rng(0), 6, 4)

    def test_shape_mismatch_rejected(self, f64):
        rng = np.random.default_rng(8)
        mha = MultiHeadAttention(rng, 4, 2)
        q = T.Tensor(rng.normal(size=(1, 2, 4)))
        bad = T.Tensor(rng.normal(size=(1, 2, 6)))
        with pytest.raises(ShapeError):
            mha(q, bad, bad)

    def test_gradients_flow_to_all_projections(self, f64):
        rng = np.random.default_rng(9)
        mha = MultiHeadAttention(rng, 4, 2)
        x = T.Tensor(rng.normal(size=(1, 3, 4)))
        with T.Tape():
            loss = T.tsum(mha(x, x, x, causal_mask(3)))
            loss.backward()
        for name, p in mha.params("mha").items():
            assert p.grad is not None, name


def test_layer_norm_params_named():
    ln = LayerNorm(4)
    assert set(ln.params("ln")) == {"ln.g", "ln.b"}

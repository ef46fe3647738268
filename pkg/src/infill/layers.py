"""Shared neural building blocks: linear maps, layer norm, attention, masks.

All parameters are plain Tensors with requires_grad=True, created in the
ambient default dtype.  Attention masks are additive: 0 where a key is
visible, -1e9 where it is hidden (large enough that softmax underflows the
masked weight to exactly zero).
"""

import math

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError

MASKED = -1e9


def glorot(rng, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear:
    """y = x @ W + b over the last axis; x may have any leading shape."""

    def __init__(self, rng, fan_in, fan_out, bias=True):
        self.w = T.Tensor(glorot(rng, fan_in, fan_out), requires_grad=True)
        self.b = T.Tensor(np.zeros(fan_out), requires_grad=True) if bias else None

    def __call__(self, x):
        y = x @ self.w
        if self.b is not None:
            y = y + self.b
        return y

    def params(self, prefix):
        out = {prefix + ".w": self.w}
        if self.b is not None:
            out[prefix + ".b"] = self.b
        return out


class LayerNorm:
    def __init__(self, dim):
        self.gamma = T.Tensor(np.ones(dim), requires_grad=True)
        self.beta = T.Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta)

    def params(self, prefix):
        return {prefix + ".g": self.gamma, prefix + ".b": self.beta}


def causal_mask(n):
    """(1, 1, n, n) additive mask hiding keys strictly after each query."""
    m = np.triu(np.full((n, n), MASKED), k=1)
    return m[None, None, :, :]


def key_padding_mask(valid):
    """(B, 1, 1, S) additive mask hiding padded key positions.

    Args:
        valid: (B, S) array, nonzero where the position is a real token.
    """
    valid = np.asarray(valid)
    m = np.where(valid.astype(bool), 0.0, MASKED)
    return m[:, None, None, :]


class MultiHeadAttention:
    """Projected scaled-dot-product attention with head splitting."""

    def __init__(self, rng, d_model, num_heads):
        if d_model % num_heads:
            raise ConfigError(
                f"d_model {d_model} not divisible by num_heads {num_heads}")
        self.d_model = d_model
        self.num_heads = num_heads
        self.d_head = d_model // num_heads
        self.wq = Linear(rng, d_model, d_model)
        self.wk = Linear(rng, d_model, d_model)
        self.wv = Linear(rng, d_model, d_model)
        self.wo = Linear(rng, d_model, d_model)

    def __call__(self, q, k, v, mask=None, dropout=0.0, rng=None, training=False):
        """Attend queries to keys/values.

        Args:
            q: (B, Sq, d_model) tensor.
            k, v: (B, Sk, d_model) tensors with matching Sk.
            mask: additive array broadcastable to (B, heads, Sq, Sk), or None.
        """
        B, Sq, d = q.shape
        Sk = k.shape[1]
        if d != self.d_model or k.shape[-1] != self.d_model or v.shape[-1] != self.d_model:
            raise ShapeError(f"attention expects d_model={self.d_model} inputs")
        if v.shape[1] != Sk or k.shape[0] != B or v.shape[0] != B:
            raise ShapeError("key/value shapes disagree")
        H, dh = self.num_heads, self.d_head

        def split(x, S):
            return T.transpose(T.reshape(x, (B, S, H, dh)), (0, 2, 1, 3))

        qh = split(self.wq(q), Sq)
        kh = split(self.wk(k), Sk)
        vh = split(self.wv(v), Sk)
        scores = (qh @ T.transpose(kh, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
        if mask is not None:
            mask = np.asarray(mask)
            np.broadcast_shapes(mask.shape, (B, H, Sq, Sk))
            scores = scores + T.Tensor(mask)
        attn = T.softmax(scores, axis=-1)
        if training and dropout:
            attn = T.dropout(attn, dropout, rng, True)
        ctx = attn @ vh
        merged = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (B, Sq, d))
        return self.wo(merged)

    def params(self, prefix):
        out = {}
        for name in ("wq", "wk", "wv", "wo"):
            out.update(getattr(self, name).params(f"{prefix}.{name}"))
        return out

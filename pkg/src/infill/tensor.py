"""Dense float tensors with reverse-mode autodiff on an explicit tape.

Storage is a row-major numpy array.  Training runs in float32 by default; a
float64 mode (``use_dtype``) exists for gradient verification, where central
finite differences need the extra precision.

A forward pass records one tape node per operation, in execution order, so
the tape is topologically ordered by construction.  ``Tape.backward`` walks
the nodes once in reverse, accumulating gradients additively into every
reachable tensor with ``requires_grad``.  Tapes are kept in a thread-local
stack: independent passes on different threads never share state.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ContractError, NumericsError, ShapeError
from .kernels import ops as K

_DEFAULT_DTYPE = np.float32
_DEBUG_FINITE = False


def set_default_dtype(dtype):
    """Set the dtype used for new tensors: np.float32 or np.float64."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ShapeError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _DEFAULT_DTYPE = dt.type


def get_default_dtype():
    return np.dtype(_DEFAULT_DTYPE)


class use_dtype:
    """Context manager that temporarily switches the default dtype."""

    def __init__(self, dtype):
        self._dtype = dtype
        self._saved = None

    def __enter__(self):
        global _DEFAULT_DTYPE
        self._saved = _DEFAULT_DTYPE
        set_default_dtype(self._dtype)
        return self

    def __exit__(self, *exc):
        global _DEFAULT_DTYPE
        _DEFAULT_DTYPE = self._saved
        return False


def set_debug_finite(enabled):
    """Enable per-op finite checks (debug mode); off in normal runs."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(enabled)


_tls = threading.local()


def _state():
    if not hasattr(_tls, "tapes"):
        _tls.tapes = []
        _tls.grad_enabled = True
    return _tls


class no_grad:
    """Context manager that disables tape recording."""

    def __enter__(self):
        st = _state()
        self._saved = st.grad_enabled
        st.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state().grad_enabled = self._saved
        return False


class Tensor:
    """A dense float array plus autodiff metadata.

    Values written by a producing op are treated as immutable; parameter
    (leaf) tensors may be rewritten between passes by the optimizer.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Run the recording tape's backward pass from this scalar."""
        if self._tape is None:
            raise ContractError("tensor was not recorded on any tape")
        self._tape.backward(self)

    def __repr__(self):
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # Operator sugar; constants are accepted on either side.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("tensor/tensor division is not supported; multiply by a reciprocal")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("op", "inputs", "out", "bwd")

    def __init__(self, op, inputs, out, bwd):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.bwd = bwd


class Tape:
    """Append-only record of ops, topologically ordered by construction."""

    def __init__(self):
        self.nodes = []
        self._produced = set()

    def __enter__(self):
        _state().tapes.append(self)
        return self

    def __exit__(self, *exc):
        _state().tapes.pop()
        return False

    def backward(self, loss):
        """Populate gradients of every requires_grad tensor reachable from loss.

        Visits each node exactly once, in reverse recording order; a tensor
        consumed by several ops receives the sum of the incoming gradients.
        """
        if not isinstance(loss, Tensor) or loss.size != 1:
            raise ContractError("backward requires a scalar loss tensor")
        if id(loss) not in self._produced:
            raise ContractError("loss is not reachable from this tape")
        flows = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g_out = flows.pop(id(node.out), None)
            if g_out is None:
                continue
            in_grads = node.bwd(g_out)
            for t, g in zip(node.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                if g.dtype != t.data.dtype:
                    g = g.astype(t.data.dtype)
                if id(t) in self._produced:
                    prev = flows.get(id(t))
                    flows[id(t)] = g if prev is None else prev + g
                else:
                    t.grad = np.array(g) if t.grad is None else t.grad + g


def backward(loss):
    """Free-function form of Tensor.backward."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward requires a Tensor")
    loss.backward()


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _record(op, inputs, out_data, bwd):
    """Wrap an op result, recording a tape node when gradients are wanted."""
    st = _state()
    if _DEBUG_FINITE and not np.all(np.isfinite(out_data)):
        raise NumericsError(f"non-finite values out of op {op!r}")
    track = st.grad_enabled and st.tapes and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=bool(track), dtype=out_data.dtype)
    if track:
        tape = st.tapes[-1]
        tape.nodes.append(_Node(op, inputs, out, bwd))
        tape._produced.add(id(out))
        out._tape = tape
    return out


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record("add", (a, b), out, bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record("sub", (a, b), out, bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _record("mul", (a, b), out, bwd)


def relu(x):
    x = as_tensor(x)
    out = np.maximum(x.data, 0)

    def bwd(g):
        return (g * (x.data > 0),)

    return _record("relu", (x,), out, bwd)


def sigmoid(x):
    x = as_tensor(x)
    out = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _record("sigmoid", (x,), out, bwd)


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _record("tanh", (x,), out, bwd)


def tsum(x):
    """Sum of all entries, as a scalar tensor."""
    x = as_tensor(x)
    out = x.data.sum(dtype=x.data.dtype)

    def bwd(g):
        return (np.full_like(x.data, g),)

    return _record("sum", (x,), np.asarray(out), bwd)


# ---------------------------------------------------------------------------
# Shape ops
# ---------------------------------------------------------------------------

def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(x.data.shape),)

    return _record("reshape", (x,), out, bwd)


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    out = np.ascontiguousarray(x.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def bwd(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return _record("transpose", (x,), out, bwd)


def concat(tensors, axis):
    tensors = tuple(as_tensor(t) for t in tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _record("concat", tensors, out, bwd)


def slice_axis(x, start, stop, axis=-1):
    """Contiguous slice along one axis, with scatter-back gradient."""
    x = as_tensor(x)
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = np.ascontiguousarray(x.data[index])

    def bwd(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _record("slice", (x,), out, bwd)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    """Matrix product; 2-D, stacked (leading dims equal), or ND @ 2-D.

    Gradients of both operands are recorded.  Inner dimensions must agree.
    """
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {ad.shape} @ {bd.shape}")
    if ad.ndim > 2 and bd.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError(f"matmul leading dimensions differ: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def bwd(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2 and ad.ndim > 2:
            k = ad.shape[-1]
            gb = ad.reshape(-1, k).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return _record("matmul", (a, b), out, bwd)


# ---------------------------------------------------------------------------
# Row-wise kernels (softmax, layer norm, embedding, cross-entropy)
# ---------------------------------------------------------------------------

def _rows2d(arr):
    return np.ascontiguousarray(arr.reshape(-1, arr.shape[-1]))


def softmax(x, axis=-1):
    """Softmax along an axis, max-subtracted; rows sum to 1.

    The last-axis case runs through the fused kernel backend; other axes use
    the generic numpy formula.
    """
    x = as_tensor(x)
    nd = x.data.ndim
    if axis < 0:
        axis += nd
    if axis == nd - 1:
        y2 = K.softmax_fwd(_rows2d(x.data))
        out = y2.reshape(x.data.shape)

        def bwd(g):
            gx = K.softmax_bwd(_rows2d(out), _rows2d(g))
            return (gx.reshape(x.data.shape),)

        return _record("softmax", (x,), out, bwd)

    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd_gen(g):
        dot = (out * g).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _record("softmax", (x,), out, bwd_gen)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Zero-mean unit-variance normalization of the last axis, then affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.shape[-1] < 2:
        raise ShapeError("layer_norm requires last-axis length >= 2")
    x2 = _rows2d(x.data)
    y2, mean, rstd = K.layer_norm_fwd(x2, gamma.data, beta.data, float(eps))
    out = y2.reshape(x.data.shape)

    def bwd(g):
        gx, ggamma, gbeta = K.layer_norm_bwd(x2, gamma.data, mean, rstd, _rows2d(g))
        return gx.reshape(x.data.shape), ggamma, gbeta

    return _record("layer_norm", (x, gamma, beta), out, bwd)


def embedding_lookup(table, ids):
    """Gather rows of an embedding table; gradients scatter-add back.

    Args:
        table: (vocab, dim) tensor.
        ids: int array-like, any shape; all values must lie in [0, vocab).

    Returns:
        Tensor of shape ids.shape + (dim,).
    """
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise IndexError(f"embedding id out of range [0, {vocab})")
    out = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        rows = np.ascontiguousarray(g.reshape(-1, table.data.shape[-1]))
        K.scatter_add_rows(gt, np.ascontiguousarray(ids.reshape(-1)), rows)
        return (gt,)

    return _record("embedding", (table,), out, bwd)


def cross_entropy(logits, targets, mask=None):
    """Masked sum of -log softmax(logits)[target].

    Args:
        logits: (n, v) tensor.
        targets: (n,) int ids, all in [0, v).
        mask: optional (n,) array; positions with 0 are excluded.  With every
            position masked out the result is exactly 0.

    Returns:
        Scalar tensor holding the sum (not mean) of the masked losses.
    """
    logits = as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects 2-D logits, got {logits.shape}")
    n, v = logits.data.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (n,):
        raise ShapeError(f"targets shape {targets.shape} != ({n},)")
    if targets.size and (targets.min() < 0 or targets.max() >= v):
        raise IndexError(f"target id out of range [0, {v})")
    if mask is None:
        mask = np.ones(n, dtype=logits.data.dtype)
    else:
        mask = np.ascontiguousarray(np.asarray(mask, dtype=logits.data.dtype))
    x2 = np.ascontiguousarray(logits.data)
    loss, probs = K.cross_entropy_fwd(x2, targets, mask)

    def bwd(g):
        scale = logits.data.dtype.type(np.asarray(g).reshape(()))
        return (K.cross_entropy_bwd(probs, targets, mask, scale),)

    return _record("cross_entropy", (logits,), np.asarray(loss), bwd)


def dropout(x, rate, rng, training):
    """Inverted dropout: scales kept entries by 1/(1-rate) during training."""
    x = as_tensor(x)
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= rate).astype(x.data.dtype)
    keep /= x.data.dtype.type(1.0 - rate)
    return mul(x, Tensor(keep, dtype=x.data.dtype))

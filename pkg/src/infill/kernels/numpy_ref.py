"""Numpy reference implementations of the hot kernels.

These are the import-time fallback when the compiled extension is missing
(or disabled via INFILL_NO_EXT=1).  Each function here mirrors the signature
and semantics of its counterpart in ``_ckernels`` exactly; the compiled
versions fuse the elementwise passes but compute the same quantities, so the
two backends agree to float rounding.

All 2-D inputs are expected C-contiguous with rows as the reduction axis.
"""

import numpy as np

NAME = "numpy"


def softmax_fwd(x):
    """Row-wise softmax of a 2-D array, max-subtracted for stability."""
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y, gy):
    """Gradient of row-wise softmax given its output y and upstream gy."""
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def cross_entropy_fwd(logits, targets, mask):
    """Masked sum of -log softmax(logits)[target] over rows.

    Args:
        logits: (n, v) float array.
        targets: (n,) int64 array of class ids.
        mask: (n,) float array; rows with mask 0 contribute nothing.

    Returns:
        (loss, probs): scalar masked NLL sum and the (n, v) softmax, which
        the backward pass reuses.
    """
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    lse = m[:, 0] + np.log(z[:, 0])
    picked = logits[np.arange(logits.shape[0]), targets]
    loss = ((lse - picked) * mask).sum(dtype=logits.dtype)
    return logits.dtype.type(loss), probs


def cross_entropy_bwd(probs, targets, mask, gloss):
    """Gradient of cross_entropy_fwd wrt logits: gloss * mask * (p - onehot)."""
    g = probs * (gloss * mask)[:, None]
    g[np.arange(probs.shape[0]), targets] -= gloss * mask
    return g


def layer_norm_fwd(x, gamma, beta, eps):
    """Row-wise layer norm of a 2-D array with affine gamma/beta.

    Returns (y, mean, rstd); mean and rstd are per-row and are saved for
    the backward pass.
    """
    mean = x.mean(axis=1)
    var = ((x - mean[:, None]) ** 2).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean[:, None]) * rstd[:, None] * gamma + beta
    return y, mean, rstd


def layer_norm_bwd(x, gamma, mean, rstd, gy):
    """Gradients of layer_norm_fwd: returns (gx, ggamma, gbeta)."""
    xhat = (x - mean[:, None]) * rstd[:, None]
    gxhat = gy * gamma
    gx = rstd[:, None] * (
        gxhat
        - gxhat.mean(axis=1, keepdims=True)
        - xhat * (gxhat * xhat).mean(axis=1, keepdims=True)
    )
    ggamma = (gy * xhat).sum(axis=0)
    gbeta = gy.sum(axis=0)
    return gx, ggamma, gbeta


def scatter_add_rows(table, ids, rows):
    """In-place table[ids[i]] += rows[i]; repeated ids accumulate."""
    np.add.at(table, ids, rows)


def adam_step(param, grad, m, v, lr, beta1, beta2, eps, step):
    """One fused bias-corrected Adam update, in place on all four arrays."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)

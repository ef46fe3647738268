# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused row-wise softmax / cross-entropy / layer norm,
embedding scatter-add, and the Adam update.

Same signatures and math as ``numpy_ref``.  Reductions and elementwise
chains are fused into single C passes; the exp over a whole logit matrix
is the one part left to numpy, whose vectorized transcendentals beat a
scalar libm loop.  Float32 inputs are computed in float32 throughout,
matching what numpy does with the reference implementations.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expf, log, logf, pow, sqrt, sqrtf

cnp.import_array()

ctypedef fused floating:
    float
    double

NAME = "compiled"


cdef inline floating _sqrt(floating x) noexcept nogil:
    if floating is float:
        return sqrtf(x)
    else:
        return sqrt(x)


cdef inline floating _log(floating x) noexcept nogil:
    if floating is float:
        return logf(x)
    else:
        return log(x)


cdef inline floating _row_sum(floating[:, ::1] y, Py_ssize_t i,
                              Py_ssize_t c) noexcept nogil:
    # four independent accumulators so the compiler can vectorize
    cdef floating s0 = 0, s1 = 0, s2 = 0, s3 = 0
    cdef Py_ssize_t j = 0
    while j + 4 <= c:
        s0 += y[i, j]
        s1 += y[i, j + 1]
        s2 += y[i, j + 2]
        s3 += y[i, j + 3]
        j += 4
    while j < c:
        s0 += y[i, j]
        j += 1
    return (s0 + s1) + (s2 + s3)


def _empty_like_2d(floating[:, ::1] x):
    if floating is float:
        return np.empty((x.shape[0], x.shape[1]), dtype=np.float32)
    else:
        return np.empty((x.shape[0], x.shape[1]), dtype=np.float64)


def _empty_rows(floating[:, ::1] x):
    if floating is float:
        return np.empty(x.shape[0], dtype=np.float32)
    else:
        return np.empty(x.shape[0], dtype=np.float64)


def _row_max(floating[:, ::1] x, floating[::1] m):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    cdef floating b0, b1, b2, b3
    for i in range(r):
        b0 = b1 = b2 = b3 = x[i, 0]
        j = 0
        while j + 4 <= c:
            if x[i, j] > b0:
                b0 = x[i, j]
            if x[i, j + 1] > b1:
                b1 = x[i, j + 1]
            if x[i, j + 2] > b2:
                b2 = x[i, j + 2]
            if x[i, j + 3] > b3:
                b3 = x[i, j + 3]
            j += 4
        while j < c:
            if x[i, j] > b0:
                b0 = x[i, j]
            j += 1
        if b1 > b0:
            b0 = b1
        if b2 > b0:
            b0 = b2
        if b3 > b0:
            b0 = b3
        m[i] = b0


def softmax_fwd(floating[:, ::1] x):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    m_arr = _empty_rows(x)
    cdef floating[::1] m = m_arr
    _row_max(x, m)
    out = np.subtract(np.asarray(x), m_arr[:, None])
    np.exp(out, out=out)
    cdef floating[:, ::1] y = out
    cdef floating inv
    for i in range(r):
        inv = <floating> 1.0 / _row_sum(y, i, c)
        for j in range(c):
            y[i, j] *= inv
    return out


def softmax_bwd(floating[:, ::1] y, floating[:, ::1] gy):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    out = _empty_like_2d(y)
    cdef floating[:, ::1] gx = out
    cdef floating dot
    for i in range(r):
        dot = 0
        for j in range(c):
            dot += y[i, j] * gy[i, j]
        for j in range(c):
            gx[i, j] = y[i, j] * (gy[i, j] - dot)
    return out


def cross_entropy_fwd(floating[:, ::1] logits, cnp.int64_t[::1] targets,
                      floating[::1] mask):
    cdef Py_ssize_t r = logits.shape[0], c = logits.shape[1], i, j
    m_arr = _empty_rows(logits)
    cdef floating[::1] m = m_arr
    _row_max(logits, m)
    probs_arr = np.subtract(np.asarray(logits), m_arr[:, None])
    np.exp(probs_arr, out=probs_arr)
    cdef floating[:, ::1] probs = probs_arr
    cdef floating loss = 0, z, inv, lse
    for i in range(r):
        z = _row_sum(probs, i, c)
        inv = <floating> 1.0 / z
        for j in range(c):
            probs[i, j] *= inv
        lse = m[i] + _log(z)
        loss += (lse - logits[i, targets[i]]) * mask[i]
    if floating is float:
        return np.float32(loss), probs_arr
    else:
        return np.float64(loss), probs_arr


def cross_entropy_bwd(floating[:, ::1] probs, cnp.int64_t[::1] targets,
                      floating[::1] mask, floating gloss):
    cdef Py_ssize_t r = probs.shape[0], c = probs.shape[1], i, j
    out = _empty_like_2d(probs)
    cdef floating[:, ::1] g = out
    cdef floating scale
    for i in range(r):
        scale = gloss * mask[i]
        for j in range(c):
            g[i, j] = probs[i, j] * scale
        g[i, targets[i]] -= scale
    return out


def layer_norm_fwd(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta,
                   floating eps):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    y_arr = _empty_like_2d(x)
    mean_arr = _empty_rows(x)
    rstd_arr = _empty_rows(x)
    cdef floating[:, ::1] y = y_arr
    cdef floating[::1] mean = mean_arr
    cdef floating[::1] rstd = rstd_arr
    cdef floating mu, var, d, rs
    for i in range(r):
        mu = 0
        for j in range(c):
            mu += x[i, j]
        mu /= c
        var = 0
        for j in range(c):
            d = x[i, j] - mu
            var += d * d
        var /= c
        rs = <floating> 1.0 / _sqrt(var + eps)
        mean[i] = mu
        rstd[i] = rs
        for j in range(c):
            y[i, j] = (x[i, j] - mu) * rs * gamma[j] + beta[j]
    return y_arr, mean_arr, rstd_arr


def layer_norm_bwd(floating[:, ::1] x, floating[::1] gamma, floating[::1] mean,
                   floating[::1] rstd, floating[:, ::1] gy):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    gx_arr = _empty_like_2d(x)
    if floating is float:
        ggamma_arr = np.zeros(x.shape[1], dtype=np.float32)
        gbeta_arr = np.zeros(x.shape[1], dtype=np.float32)
    else:
        ggamma_arr = np.zeros(x.shape[1], dtype=np.float64)
        gbeta_arr = np.zeros(x.shape[1], dtype=np.float64)
    cdef floating[:, ::1] gx = gx_arr
    cdef floating[::1] ggamma = ggamma_arr
    cdef floating[::1] gbeta = gbeta_arr
    cdef floating xhat, gxh, m1, m2
    for i in range(r):
        m1 = 0
        m2 = 0
        for j in range(c):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            gxh = gy[i, j] * gamma[j]
            m1 += gxh
            m2 += gxh * xhat
            ggamma[j] += gy[i, j] * xhat
            gbeta[j] += gy[i, j]
        m1 /= c
        m2 /= c
        for j in range(c):
            xhat = (x[i, j] - mean[i]) * rstd[i]
            gxh = gy[i, j] * gamma[j]
            gx[i, j] = rstd[i] * (gxh - m1 - xhat * m2)
    return gx_arr, ggamma_arr, gbeta_arr


def scatter_add_rows(floating[:, ::1] table, cnp.int64_t[::1] ids,
                     floating[:, ::1] rows):
    cdef Py_ssize_t n = ids.shape[0], c = table.shape[1], i, j
    cdef cnp.int64_t row
    for i in range(n):
        row = ids[i]
        for j in range(c):
            table[row, j] += rows[i, j]


def adam_step(floating[::1] param, floating[::1] grad, floating[::1] m,
              floating[::1] v, floating lr, floating beta1, floating beta2,
              floating eps, long step):
    cdef Py_ssize_t n = param.shape[0], i
    cdef floating b1 = beta1, b2 = beta2
    cdef floating c1 = <floating> 1.0 - beta1
    cdef floating c2 = <floating> 1.0 - beta2
    cdef floating bc1 = <floating> (1.0 - pow(<double> beta1, <double> step))
    cdef floating bc2 = <floating> (1.0 - pow(<double> beta2, <double> step))
    for i in range(n):
        m[i] = b1 * m[i] + c1 * grad[i]
        v[i] = b2 * v[i] + c2 * grad[i] * grad[i]
        param[i] -= lr * (m[i] / bc1) / (_sqrt(v[i] / bc2) + eps)
    return None

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled training/inference kernel for the two-hidden-layer ReLU net.

Same contract as ``_mlp_py``; selected preferentially by ``kernels`` when
built. Loops are hand-written because the matrices here are too small for
BLAS dispatch overhead to pay off.
"""

import numpy as np

from libc.math cimport isfinite, sqrt


cdef void _forward(const double[:, ::1] W1, const double[::1] b1,
                   const double[:, ::1] W2, const double[::1] b2,
                   const double[:, ::1] W3, const double[::1] b3,
                   const double[:, ::1] X, Py_ssize_t nb,
                   double[:, ::1] z1, double[:, ::1] a1,
                   double[:, ::1] z2, double[:, ::1] a2,
                   double[::1] yhat) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t d = W1.shape[1], h1 = W1.shape[0], h2 = W2.shape[0]
    cdef double acc
    for i in range(nb):
        for j in range(h1):
            acc = b1[j]
            for k in range(d):
                acc += W1[j, k] * X[i, k]
            z1[i, j] = acc
            a1[i, j] = acc if acc > 0.0 else 0.0
        for j in range(h2):
            acc = b2[j]
            for k in range(h1):
                acc += W2[j, k] * a1[i, k]
            z2[i, j] = acc
            a2[i, j] = acc if acc > 0.0 else 0.0
        acc = b3[0]
        for k in range(h2):
            acc += W3[0, k] * a2[i, k]
        yhat[i] = acc


cdef double _loss_grad(const double[:, ::1] W1, const double[::1] b1,
                       const double[:, ::1] W2, const double[::1] b2,
                       const double[:, ::1] W3, const double[::1] b3,
                       const double[:, ::1] X, const double[::1] y, Py_ssize_t nb,
                       double[:, ::1] z1, double[:, ::1] a1,
                       double[:, ::1] z2, double[:, ::1] a2,
                       double[::1] yhat, double[::1] g,
                       double[:, ::1] d1, double[:, ::1] d2,
                       double[:, ::1] gW1, double[::1] gb1,
                       double[:, ::1] gW2, double[::1] gb2,
                       double[:, ::1] gW3, double[::1] gb3) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t d = W1.shape[1], h1 = W1.shape[0], h2 = W2.shape[0]
    cdef double loss = 0.0, r, acc, w

    _forward(W1, b1, W2, b2, W3, b3, X, nb, z1, a1, z2, a2, yhat)
    for i in range(nb):
        r = yhat[i] - y[i]
        loss += r * r
        g[i] = 2.0 * r / nb
    loss /= nb

    gb3[0] = 0.0
    for k in range(h2):
        gW3[0, k] = 0.0
    for i in range(nb):
        gb3[0] += g[i]
        for k in range(h2):
            gW3[0, k] += g[i] * a2[i, k]

    # hidden-layer deltas; ReLU subgradient at 0 is 0 (strict >)
    for i in range(nb):
        for j in range(h2):
            d2[i, j] = g[i] * W3[0, j] if z2[i, j] > 0.0 else 0.0
    for j in range(h2):
        gb2[j] = 0.0
        for k in range(h1):
            gW2[j, k] = 0.0
    for i in range(nb):
        for j in range(h2):
            w = d2[i, j]
            if w != 0.0:
                gb2[j] += w
                for k in range(h1):
                    gW2[j, k] += w * a1[i, k]

    for i in range(nb):
        for k in range(h1):
            d1[i, k] = 0.0
        for j in range(h2):
            w = d2[i, j]
            if w != 0.0:
                for k in range(h1):
                    d1[i, k] += w * W2[j, k]
        for k in range(h1):
            if z1[i, k] <= 0.0:
                d1[i, k] = 0.0
    for k in range(h1):
        gb1[k] = 0.0
        for j in range(d):
            gW1[k, j] = 0.0
    for i in range(nb):
        for k in range(h1):
            w = d1[i, k]
            if w != 0.0:
                gb1[k] += w
                for j in range(d):
                    gW1[k, j] += w * X[i, j]
    return loss


cdef void _adam_step(double[::1] p, double[::1] m, double[::1] v,
                     const double[::1] g, double lr, double beta1, double beta2,
                     double eps, double c1, double c2) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(p.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def forward_batch(W1, b1, W2, b2, W3, b3, X):
    """Row-wise network output for an (n, d) input matrix, shape (n,)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t h1 = W1.shape[0], h2 = W2.shape[0]
    z1 = np.empty((n, h1)); a1 = np.empty((n, h1))
    z2 = np.empty((n, h2)); a2 = np.empty((n, h2))
    yhat = np.empty(n)
    _forward(W1, b1, W2, b2, W3, b3, X, n, z1, a1, z2, a2, yhat)
    return yhat


def loss_and_grad(W1, b1, W2, b2, W3, b3, X, y):
    """Mean-squared-error loss and its gradient w.r.t. every parameter array."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = W1.shape[1], h1 = W1.shape[0], h2 = W2.shape[0]
    z1 = np.empty((n, h1)); a1 = np.empty((n, h1))
    z2 = np.empty((n, h2)); a2 = np.empty((n, h2))
    yhat = np.empty(n); g = np.empty(n)
    d1 = np.empty((n, h1)); d2 = np.empty((n, h2))
    gW1 = np.empty((h1, d)); gb1 = np.empty(h1)
    gW2 = np.empty((h2, h1)); gb2 = np.empty(h2)
    gW3 = np.empty((1, h2)); gb3 = np.empty(1)
    loss = _loss_grad(W1, b1, W2, b2, W3, b3, X, y, n,
                      z1, a1, z2, a2, yhat, g, d1, d2,
                      gW1, gb1, gW2, gb2, gW3, gb3)
    return float(loss), gW1, gb1, gW2, gb2, gW3, gb3


def train_mlp(W1, b1, W2, b2, W3, b3, X, y, perms, batch_size, lr, beta1, beta2, eps):
    """Adam/MSE minibatch training; parameters are updated in place.

    ``perms`` holds one precomputed row permutation per epoch. Returns
    (-1, -1) on success, or the (epoch, step) at which the batch loss
    went non-finite.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    perms = np.ascontiguousarray(perms, dtype=np.intp)

    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = W1.shape[1], h1 = W1.shape[0], h2 = W2.shape[0]
    cdef Py_ssize_t bs = batch_size

    Xb = np.empty((bs, d)); yb = np.empty(bs)
    z1 = np.empty((bs, h1)); a1 = np.empty((bs, h1))
    z2 = np.empty((bs, h2)); a2 = np.empty((bs, h2))
    yhat = np.empty(bs); g = np.empty(bs)
    d1 = np.empty((bs, h1)); d2 = np.empty((bs, h2))
    gW1 = np.empty((h1, d)); gb1 = np.empty(h1)
    gW2 = np.empty((h2, h1)); gb2 = np.empty(h2)
    gW3 = np.empty((1, h2)); gb3 = np.empty(1)

    m_arrays = [np.zeros(a.size) for a in (W1, b1, W2, b2, W3, b3)]
    v_arrays = [np.zeros(a.size) for a in (W1, b1, W2, b2, W3, b3)]

    cdef double[:, ::1] W1v = W1, W2v = W2, W3v = W3
    cdef double[::1] b1v = b1, b2v = b2, b3v = b3
    cdef double[:, ::1] z1v = z1, a1v = a1, z2v = z2, a2v = a2
    cdef double[:, ::1] d1v = d1, d2v = d2
    cdef double[:, ::1] gW1v = gW1, gW2v = gW2, gW3v = gW3
    cdef double[::1] gb1v = gb1, gb2v = gb2, gb3v = gb3
    cdef double[::1] yhatv = yhat, gv = g
    cdef double[:, ::1] Xv = X, Xbv = Xb
    cdef double[::1] yv = y, ybv = yb
    cdef const Py_ssize_t[:, ::1] pv = perms

    # flat aliases of the parameter/gradient arrays for the Adam update
    cdef double[::1] pW1 = np.reshape(W1, -1), pb1 = np.reshape(b1, -1)
    cdef double[::1] pW2 = np.reshape(W2, -1), pb2 = np.reshape(b2, -1)
    cdef double[::1] pW3 = np.reshape(W3, -1), pb3 = np.reshape(b3, -1)
    cdef double[::1] fgW1 = np.reshape(gW1, -1), fgb1 = np.reshape(gb1, -1)
    cdef double[::1] fgW2 = np.reshape(gW2, -1), fgb2 = np.reshape(gb2, -1)
    cdef double[::1] fgW3 = np.reshape(gW3, -1), fgb3 = np.reshape(gb3, -1)
    cdef double[::1] mW1 = m_arrays[0], mb1 = m_arrays[1], mW2 = m_arrays[2]
    cdef double[::1] mb2 = m_arrays[3], mW3 = m_arrays[4], mb3 = m_arrays[5]
    cdef double[::1] vW1 = v_arrays[0], vb1 = v_arrays[1], vW2 = v_arrays[2]
    cdef double[::1] vb2 = v_arrays[3], vW3 = v_arrays[4], vb3 = v_arrays[5]

    cdef Py_ssize_t epoch, start, i, nb, step
    cdef Py_ssize_t n_epochs = perms.shape[0]
    cdef double lr_c = lr, b1_c = beta1, b2_c = beta2, eps_c = eps
    cdef double loss, c1, c2
    cdef long t = 0
    cdef Py_ssize_t bad_epoch = -1, bad_step = -1

    with nogil:
        for epoch in range(n_epochs):
            step = 0
            start = 0
            while start < n:
                nb = min(bs, n - start)
                for i in range(nb):
                    Xbv[i, :] = Xv[pv[epoch, start + i], :]
                    ybv[i] = yv[pv[epoch, start + i]]
                loss = _loss_grad(W1v, b1v, W2v, b2v, W3v, b3v, Xbv, ybv, nb,
                                  z1v, a1v, z2v, a2v, yhatv, gv, d1v, d2v,
                                  gW1v, gb1v, gW2v, gb2v, gW3v, gb3v)
                if not isfinite(loss):
                    bad_epoch = epoch
                    bad_step = step
                    break
                t += 1
                c1 = 1.0 - b1_c ** t
                c2 = 1.0 - b2_c ** t
                _adam_step(pW1, mW1, vW1, fgW1, lr_c, b1_c, b2_c, eps_c, c1, c2)
                _adam_step(pb1, mb1, vb1, fgb1, lr_c, b1_c, b2_c, eps_c, c1, c2)
                _adam_step(pW2, mW2, vW2, fgW2, lr_c, b1_c, b2_c, eps_c, c1, c2)
                _adam_step(pb2, mb2, vb2, fgb2, lr_c, b1_c, b2_c, eps_c, c1, c2)
                _adam_step(pW3, mW3, vW3, fgW3, lr_c, b1_c, b2_c, eps_c, c1, c2)
                _adam_step(pb3, mb3, vb3, fgb3, lr_c, b1_c, b2_c, eps_c, c1, c2)
                start += bs
                step += 1
            if bad_epoch >= 0:
                break
    return bad_epoch, bad_step

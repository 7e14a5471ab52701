"""Pure-numpy training/inference kernel for the two-hidden-layer ReLU net.

Fallback for the compiled extension in ``_mlp.pyx``; both expose the same
three functions with identical semantics. ReLU subgradient at 0 is 0
(strict > comparisons), pinned for reproducibility.
"""

from __future__ import annotations

import math

import numpy as np


def forward_batch(W1, b1, W2, b2, W3, b3, X):
    """Row-wise network output for an (n, d) input matrix, shape (n,)."""
    a1 = np.maximum(X @ W1.T + b1, 0.0)
    a2 = np.maximum(a1 @ W2.T + b2, 0.0)
    return (a2 @ W3.T).ravel() + b3[0]


def loss_and_grad(W1, b1, W2, b2, W3, b3, X, y):
    """Mean-squared-error loss and its gradient w.r.t. every parameter array."""
    n = X.shape[0]
    z1 = X @ W1.T + b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ W2.T + b2
    a2 = np.maximum(z2, 0.0)
    yhat = (a2 @ W3.T).ravel() + b3[0]

    r = yhat - y
    loss = float(r @ r) / n

    g = (2.0 / n) * r                      # dL/dyhat, (n,)
    gW3 = (g[None, :] @ a2)                # (1, h2)
    gb3 = np.array([g.sum()])
    d2 = np.outer(g, W3.ravel())
    d2[z2 <= 0.0] = 0.0                    # (n, h2)
    gW2 = d2.T @ a1
    gb2 = d2.sum(axis=0)
    d1 = d2 @ W2
    d1[z1 <= 0.0] = 0.0                    # (n, h1)
    gW1 = d1.T @ X
    gb1 = d1.sum(axis=0)
    return loss, gW1, gb1, gW2, gb2, gW3, gb3


def train_mlp(W1, b1, W2, b2, W3, b3, X, y, perms, batch_size, lr, beta1, beta2, eps):
    """Adam/MSE minibatch training; parameters are updated in place.

    ``perms`` holds one precomputed row permutation per epoch, so the
    visit order is identical across kernel backends. Returns (-1, -1) on
    success, or the (epoch, step) at which the batch loss went non-finite.
    """
    params = (W1, b1, W2, b2, W3, b3)
    m_state = [np.zeros_like(p) for p in params]
    v_state = [np.zeros_like(p) for p in params]

    n = X.shape[0]
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is detected, not warned
        for epoch in range(perms.shape[0]):
            order = perms[epoch]
            for step, start in enumerate(range(0, n, batch_size)):
                idx = order[start : start + batch_size]
                loss, *grads = loss_and_grad(W1, b1, W2, b2, W3, b3, X[idx], y[idx])
                if not math.isfinite(loss):
                    return epoch, step
                t += 1
                c1 = 1.0 - beta1**t
                c2 = 1.0 - beta2**t
                for p, m, v, g in zip(params, m_state, v_state, grads):
                    m *= beta1
                    m += (1.0 - beta1) * g
                    v *= beta2
                    v += (1.0 - beta2) * g * g
                    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return -1, -1

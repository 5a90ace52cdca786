"""Pure numpy implementations of the hot kernels."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(E, width):
    # (B, P, width * d) view over every valid window position
    B, T, d = E.shape
    win = sliding_window_view(E, width, axis=1)  # (B, P, d, width)
    return win.transpose(0, 1, 3, 2).reshape(B, T - width + 1, width * d)


def conv_maxpool_forward(E, W, b):
    """Valid 1-D convolution over token positions followed by max-over-time.

    ``E`` is ``(B, T, d)``, ``W`` is ``(width, d, F)``, ``b`` is ``(F,)``.
    Returns the pre-activation maxima ``(B, F)`` and their positions.
    """
    width, d, F = W.shape
    z = _windows(E, width) @ W.reshape(width * d, F) + b
    pos = z.argmax(axis=1)
    pooled = np.take_along_axis(z, pos[:, None, :], axis=1)[:, 0, :]
    return pooled, pos.astype(np.int64)


def conv_maxpool_backward(E, W, pos, dpooled, need_input_grad=True):
    """Gradients of the pooled maxima w.r.t. ``W``, ``b`` and (optionally) ``E``."""
    width, d, F = W.shape
    B = E.shape[0]
    win = _windows(E, width)
    rows = np.arange(B)[:, None]
    picked = win[rows, pos]  # (B, F, width * d)
    dW = np.einsum("bf,bfk->kf", dpooled, picked).reshape(width, d, F)
    db = dpooled.sum(axis=0)
    dE = None
    if need_input_grad:
        dE = np.zeros_like(E)
        offs = pos[:, :, None] + np.arange(width)  # (B, F, width)
        vals = dpooled[:, :, None, None] * W.transpose(2, 0, 1)[None]  # (B, F, width, d)
        np.add.at(dE, (rows[:, :, None], offs), vals)
    return dW, db, dE


def tsne_gradient(Y, P):
    """Exact t-SNE gradient and KL divergence for a 2-D layout ``Y``."""
    diff = Y[:, None, :] - Y[None, :, :]
    num = 1.0 / (1.0 + (diff ** 2).sum(axis=-1))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    PQ = (P - Q) * num
    grad = 4.0 * (PQ[:, :, None] * diff).sum(axis=1)
    mask = P > 0
    kl = float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))).sum())
    return grad, kl

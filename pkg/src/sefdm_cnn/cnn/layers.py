"""Forward/backward primitives on channel-last tensors of shape (batch, length, channels)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_forward(x, w, b):
    """Stride-1 'same' convolution (cross-correlation). ``w`` is (kernel, c_in, c_out)."""
    k, c_in, c_out = w.shape
    bsz, length, _ = x.shape
    left = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (left, k - 1 - left), (0, 0)))
    # windows: (B, L, c_in, k) -> rows of c_in*k
    cols = sliding_window_view(xp, k, axis=1).reshape(bsz * length, c_in * k)
    wm = w.transpose(1, 0, 2).reshape(c_in * k, c_out)
    out = (cols @ wm).reshape(bsz, length, c_out) + b
    return out, (cols, wm, x.shape, k, left)


def conv_backward(dout, cache):
    cols, wm, x_shape, k, left = cache
    bsz, length, c_in = x_shape
    c_out = dout.shape[-1]
    d2 = dout.reshape(bsz * length, c_out)
    dwm = cols.T @ d2
    dw = dwm.reshape(c_in, k, c_out).transpose(1, 0, 2)
    db = d2.sum(axis=0)
    dcols = (d2 @ wm.T).reshape(bsz, length, c_in, k)
    dxp = np.zeros((bsz, length + k - 1, c_in), dtype=dout.dtype)
    for j in range(k):
        dxp[:, j:j + length, :] += dcols[..., j]
    return dxp[:, left:left + length, :], dw, db


def batchnorm_forward(x, gamma, beta, eps, running=None):
    """Per-channel normalisation over (batch, length).

    With ``running=(mean, var)`` the running statistics are used (inference);
    otherwise batch statistics are used and returned in the cache.
    """
    if running is not None:
        mean, var = running
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean) * inv_std
        return xhat * gamma + beta, None
    n = x.shape[0] * x.shape[1]
    mean = x.mean(axis=(0, 1))
    xc = x - mean
    var = (xc * xc).mean(axis=(0, 1))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    return xhat * gamma + beta, (xhat, inv_std, gamma, mean, var, n)


def batchnorm_backward(dout, cache):
    xhat, inv_std, gamma, _, _, n = cache
    dgamma = (dout * xhat).sum(axis=(0, 1))
    dbeta = dout.sum(axis=(0, 1))
    dxhat = dout * gamma
    dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=(0, 1)) - xhat * (dxhat * xhat).sum(axis=(0, 1)))
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def maxpool_forward(x, width):
    """Non-overlapping max pooling along length; a ragged tail is dropped.

    Ties route to the lowest index in the window.
    """
    bsz, length, ch = x.shape
    out_len = length // width
    xw = x[:, :out_len * width].reshape(bsz, out_len, width, ch)
    idx = xw.argmax(axis=2)
    out = np.take_along_axis(xw, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return out, (idx, x.shape, width)


def maxpool_backward(dout, cache):
    idx, x_shape, width = cache
    bsz, length, ch = x_shape
    out_len = dout.shape[1]
    dxw = np.zeros((bsz, out_len, width, ch), dtype=dout.dtype)
    np.put_along_axis(dxw, idx[:, :, None, :], dout[:, :, None, :], axis=2)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :out_len * width] = dxw.reshape(bsz, out_len * width, ch)
    return dx


def global_avgpool_forward(x):
    return x.mean(axis=1), x.shape


def global_avgpool_backward(dout, x_shape):
    return np.broadcast_to(dout[:, None, :] / x_shape[1], x_shape).copy()


def dropout_forward(x, p, rng):
    """Inverted dropout; ``rng=None`` or ``p=0`` is the identity."""
    if rng is None or p == 0:
        return x, None
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def dense_forward(x, w, b):
    return x @ w + b, x


def dense_backward(dout, x, w):
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient (softmax - onehot) / B."""
    bsz = logits.shape[0]
    z = logits - logits.max(axis=-1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    loss = -log_p[np.arange(bsz), labels].mean()
    grad = np.exp(log_p)
    grad[np.arange(bsz), labels] -= 1.0
    return float(loss), grad / bsz

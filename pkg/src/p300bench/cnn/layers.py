"""Layer primitives: forward passes paired with hand-derived backward passes.

Conventions
-----------
* All arrays are float64.
* Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
  takes the upstream gradient and the cache and returns the input gradient
  (plus parameter gradients where applicable).
* Convolutions run over inputs shaped (batch, channels, time) with a
  filter bank shaped (filters, channels, width); the filter height always
  equals the channel count, so the output collapses to (batch, time', filters).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


# -- activations ---------------------------------------------------------


def elu(x, alpha: float = 1.0):
    """x for x > 0, else alpha * (exp(x) - 1)."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, alpha * np.expm1(x))


def elu_grad(x, alpha: float = 1.0):
    """Derivative of :func:`elu`: 1 for x > 0, else alpha * exp(x)."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, 1.0, alpha * np.exp(x))


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return (np.asarray(x) > 0).astype(np.float64)


# -- convolution ---------------------------------------------------------


def conv_forward(x, w, b):
    """Valid cross-correlation, stride 1, filters spanning all channels.

    Parameters
    ----------
    x : (B, C, T)
    w : (F, C, fw)
    b : (F,)

    Returns
    -------
    out : (B, T - fw + 1, F)
    """
    B, C, T = x.shape
    F, wc, fw = w.shape
    if wc != C:
        raise ValueError(f"filter height {wc} must equal channel count {C}")
    if fw > T:
        raise ValueError(f"filter width {fw} exceeds input length {T}")
    windows = sliding_window_view(x, fw, axis=2)  # (B, C, To, fw)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(B, T - fw + 1, C * fw)
    out = cols @ w.reshape(F, -1).T + b
    return out, (cols, x.shape, w)


def conv_backward(dout, cache):
    cols, x_shape, w = cache
    B, C, T = x_shape
    F, _, fw = w.shape
    To = T - fw + 1
    dw = np.tensordot(dout, cols, axes=([0, 1], [0, 1])).reshape(w.shape)
    db = dout.sum(axis=(0, 1))
    dcols = dout @ w.reshape(F, -1)  # (B, To, C*fw)
    dc = dcols.reshape(B, To, C, fw).transpose(0, 2, 1, 3)
    dx = np.zeros(x_shape)
    for j in range(fw):
        dx[:, :, j : j + To] += dc[:, :, :, j]
    return dx, dw, db


# -- batch normalization --------------------------------------------------


def batchnorm_forward(x, gamma, beta, eps: float = 1e-5):
    """Normalize each column of a 2-D array over axis 0 (training mode).

    Uses the biased batch variance.  Returns the affine output and the
    batch mean/variance so the caller can update running statistics.
    """
    mu = x.mean(axis=0)
    var = x.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out = gamma * xhat + beta
    return out, (xhat, inv, gamma), mu, var


def batchnorm_backward(dout, cache):
    xhat, inv, gamma = cache
    n = dout.shape[0]
    dgamma = (dout * xhat).sum(axis=0)
    dbeta = dout.sum(axis=0)
    dxhat = dout * gamma
    dx = (inv / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def batchnorm_eval(x, gamma, beta, running_mean, running_var, eps: float = 1e-5):
    return gamma * (x - running_mean) / np.sqrt(running_var + eps) + beta


# -- dropout --------------------------------------------------------------


def dropout_forward(x, p: float, rng, train: bool):
    """Inverted dropout: kept units are scaled by 1/(1-p) at train time."""
    if not train or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# -- pooling --------------------------------------------------------------


def avgpool_forward(x, width: int):
    """Average pool over the time axis of (B, T, F), stride = width.

    Floor semantics: the trailing ``T mod width`` samples are dropped.
    """
    B, T, F = x.shape
    Tp = T // width
    blocks = x[:, : Tp * width].reshape(B, Tp, width, F)
    return blocks.mean(axis=2), (x.shape, width)


def avgpool_backward(dout, cache):
    x_shape, width = cache
    B, T, F = x_shape
    Tp = T // width
    dx = np.zeros(x_shape)
    dx[:, : Tp * width] = np.broadcast_to(
        dout[:, :, None, :] / width, (B, Tp, width, F)
    ).reshape(B, Tp * width, F)
    return dx


def maxpool_forward(x, width: int):
    """Max pool; ties route the gradient to the earliest maximum."""
    B, T, F = x.shape
    Tp = T // width
    blocks = x[:, : Tp * width].reshape(B, Tp, width, F)
    idx = blocks.argmax(axis=2)
    out = np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]
    return out, (x.shape, width, idx)


def maxpool_backward(dout, cache):
    x_shape, width, idx = cache
    B, T, F = x_shape
    Tp = T // width
    dblocks = np.zeros((B, Tp, width, F))
    np.put_along_axis(dblocks, idx[:, :, None, :], dout[:, :, None, :], axis=2)
    dx = np.zeros(x_shape)
    dx[:, : Tp * width] = dblocks.reshape(B, Tp * width, F)
    return dx


# -- dense ----------------------------------------------------------------


def dense_forward(x, w, b):
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    dx = dout @ w.T
    dw = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dw, db


# -- softmax / loss -------------------------------------------------------


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of softmax(logits) against integer labels.

    Returns (loss, probs, dlogits) with dlogits = (probs - onehot) / B,
    the exact gradient of the mean loss.
    """
    probs = softmax(logits)
    B = logits.shape[0]
    picked = probs[np.arange(B), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B
    return loss, probs, dlogits

"""Dense tensor ops for the residual classifier: conv, relu, pooling, linear.

All functions follow the dtype of their inputs (float32 in production,
float64 in gradient checks) and are deterministic: no randomness, fixed
reduction order via BLAS matmul. Convolutions lower onto a single GEMM per
call with the column matrix laid out (C*k*k, N*OH*OW), which keeps BLAS
efficient at small batch sizes.
"""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray, ksize: int, stride: int, pad: int):
    """(N,C,H,W) -> columns (C*k*k, N*OH*OW) plus output spatial dims."""
    n, c, h, w = x.shape
    oh = (h + 2 * pad - ksize) // stride + 1
    ow = (w + 2 * pad - ksize) // stride + 1
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xp = x
    cols = np.empty((c, ksize * ksize, n, oh, ow), dtype=x.dtype)
    for i in range(ksize):
        for j in range(ksize):
            patch = xp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            cols[:, i * ksize + j] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(c * ksize * ksize, n * oh * ow), oh, ow


def _col2im(dcols: np.ndarray, x_shape, ksize: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add inverse of _im2col. dcols: (C*k*k, N*OH*OW)."""
    n, c, h, w = x_shape
    oh = (h + 2 * pad - ksize) // stride + 1
    ow = (w + 2 * pad - ksize) // stride + 1
    dcols = dcols.reshape(c, ksize * ksize, n, oh, ow)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    for i in range(ksize):
        for j in range(ksize):
            target = dxp[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
            target += dcols[:, i * ksize + j].transpose(1, 0, 2, 3)
    if pad:
        return dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 1):
    """x (N,C,H,W), w (F,C,k,k), b (F,) -> out (N,F,OH,OW) and backward cache."""
    n = x.shape[0]
    f, c, k, _ = w.shape
    cols, oh, ow = _im2col(x, k, stride, pad)
    w_mat = w.reshape(f, c * k * k)
    out = w_mat @ cols  # (F, N*OH*OW)
    out += b[:, None]
    cache = (cols, w_mat, x.shape, w.shape, stride, pad)
    out = np.ascontiguousarray(out.reshape(f, n, oh, ow).transpose(1, 0, 2, 3))
    return out, cache


def conv2d_backward(dout: np.ndarray, cache):
    """Gradients (dx, dw, db) for conv2d_forward, given dout (N,F,OH,OW)."""
    cols, w_mat, x_shape, w_shape, stride, pad = cache
    f = w_shape[0]
    k = w_shape[2]
    n, _, oh, ow = dout.shape
    dout_mat = np.ascontiguousarray(dout.transpose(1, 0, 2, 3)).reshape(f, n * oh * ow)
    db = dout_mat.sum(axis=1)
    dw = (dout_mat @ cols.T).reshape(w_shape)
    dcols = w_mat.T @ dout_mat  # (C*k*k, N*OH*OW)
    dx = _col2im(dcols, x_shape, k, stride, pad)
    return dx, dw, db


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, x > 0


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


def global_avg_pool_forward(x: np.ndarray):
    """(N,C,H,W) -> (N,C), averaging over the spatial grid."""
    n, c, h, w = x.shape
    return x.mean(axis=(2, 3)), (n, c, h, w)


def global_avg_pool_backward(dout: np.ndarray, dims) -> np.ndarray:
    n, c, h, w = dims
    scale = np.asarray(1.0 / (h * w), dtype=dout.dtype)
    return np.broadcast_to((dout * scale)[:, :, None, None], (n, c, h, w)).copy()


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x (N,D), w (K,D), b (K,) -> (N,K)."""
    return x @ w.T + b[None, :], (x, w)


def linear_backward(dout: np.ndarray, cache):
    x, w = cache
    dx = dout @ w
    dw = dout.T @ x
    db = dout.sum(axis=0)
    return dx, dw, db


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise numerically stable log-softmax."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch (float64 accumulation) and dlogits.

    dlogits is (softmax - onehot) / N in the dtype of logits.
    """
    n = logits.shape[0]
    logp = log_softmax(logits.astype(np.float64, copy=False))
    per_sample = -logp[np.arange(n), labels]
    loss = float(per_sample.mean())
    probs = np.exp(logp)
    probs[np.arange(n), labels] -= 1.0
    dlogits = (probs / n).astype(logits.dtype, copy=False)
    return loss, dlogits

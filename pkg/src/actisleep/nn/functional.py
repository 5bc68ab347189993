"""Stateless forward kernels and losses (float64 throughout).

Feature maps are ``(batch, length, channels)``; dense activations are
``(batch, units)``. Single-sample callers may pass ``(length, channels)`` /
``(units,)`` and get the same rank back.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOG_FLOOR = 1e-12


class ShapeError(ValueError):
    pass


def conv_output_length(length: int, width: int, stride: int = 1) -> int:
    if length < width:
        raise ShapeError(f"input length {length} is shorter than kernel width {width}")
    return (length - width) // stride + 1


def im2col(x: np.ndarray, width: int, stride: int) -> np.ndarray:
    """(B, T, F) -> (B * T_out, width * F) with column index ``n * F + f``."""
    B, T, F = x.shape
    t_out = conv_output_length(T, width, stride)
    win = sliding_window_view(x, width, axis=1)[:, ::stride][:, :t_out]  # (B, T_out, F, N)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B * t_out, width * F)


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1) -> np.ndarray:
    """Valid 1-D cross-correlation.

    ``z[i, k] = sum_f sum_n w[n, f, k] * x[i*stride + n, f] + b[k]``
    """
    single = x.ndim == 2
    if single:
        x = x[None]
    N, F, K = w.shape
    if x.shape[2] != F:
        raise ShapeError(f"input has {x.shape[2]} channels, kernel expects {F}")
    B, T, _ = x.shape
    t_out = conv_output_length(T, N, stride)
    out = (im2col(x, N, stride) @ w.reshape(N * F, K) + b).reshape(B, t_out, K)
    return out[0] if single else out


def maxpool_forward(x: np.ndarray, width: int, stride: int):
    """Per-channel window max. Returns ``(out, argmax)``; argmax is the
    offset inside each window (first maximum wins)."""
    if width < 1 or stride < 1:
        raise ValueError("pool width and stride must be >= 1")
    single = x.ndim == 2
    if single:
        x = x[None]
    t_out = conv_output_length(x.shape[1], width, stride)
    win = sliding_window_view(x, width, axis=1)[:, ::stride][:, :t_out]  # (B, T_out, C, width)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    if single:
        return out[0], idx[0]
    return out, idx


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"dense layer expects {w.shape[0]} inputs, got {x.shape[-1]}")
    return x @ w + b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(predicted: np.ndarray, target: np.ndarray) -> np.ndarray:
    """``-sum(target * log(max(predicted, 1e-12)))`` over the last axis.

    Soft targets are allowed. Returns one loss per row (a scalar array for
    1-D input).
    """
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {t.shape}")
    if np.any(p < 0) or np.any(t < 0):
        raise ValueError("cross_entropy needs non-negative distributions")
    return -np.sum(t * np.log(np.maximum(p, LOG_FLOOR)), axis=-1)


def softmax_cross_entropy(logits: np.ndarray, target: np.ndarray, sample_weight=None):
    """Batch-mean loss of softmax(logits) against ``target`` and its gradient
    with respect to the logits."""
    p = softmax(logits)
    per_sample = cross_entropy(p, target)
    B = logits.shape[0]
    if sample_weight is None:
        sample_weight = np.ones(B)
    loss = float(np.dot(sample_weight, per_sample) / B)
    # terms under the log floor are constant, so they drop out of the gradient
    live = target * (p >= LOG_FLOOR)
    grad = (p * live.sum(axis=-1, keepdims=True) - live) * (sample_weight[:, None] / B)
    return loss, grad

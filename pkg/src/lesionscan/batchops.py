"""Batched (batch, ...) implementations of the layer operations.

The training loop and the sliding-window scanner push many samples at once,
so convolution is done as one im2col matrix product per batch and pooling
as a block reshape. These are deliberately separate code paths from the
single-sample functions in :mod:`lesionscan.layers`; the tests pin
batch-of-one outputs against them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .layers import ConvParams, DenseParams, PoolParams
from .tensor import Tensor


@dataclass
class ConvCache:
    cols: np.ndarray  # (N*oh*ow, kh*kw*cin), im2col of the forward input
    input_shape: tuple[int, ...]
    out_hw: tuple[int, int]


@dataclass
class BatchPoolRecord:
    input_shape: tuple[int, ...]
    window: int
    argmax: np.ndarray  # (N, oh, ow, C), flat index in row-major window scan order


def conv_forward_batch(x: Tensor, p: ConvParams) -> tuple[Tensor, ConvCache]:
    if x.ndim != 4:
        raise ShapeError(f"batched conv input must be (N, H, W, C), got {tuple(x.shape)}")
    n, h, w, c = x.shape
    kh, kw, cin, cout = p.kernels.shape
    if c != cin:
        raise ShapeError(f"conv input has {c} channels, kernels expect {cin}")
    if h < kh or w < kw:
        raise ShapeError(f"conv input {h}x{w} is smaller than the {kh}x{kw} kernel")
    s = p.stride
    oh = (h - kh) // s + 1
    ow = (w - kw) // s + 1
    wins = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::s, ::s]
    # inner order (kh, kw, cin) matches the row-major flattening of the kernels
    cols = np.ascontiguousarray(wins.transpose(0, 1, 2, 4, 5, 3)).reshape(n * oh * ow, kh * kw * cin)
    w_mat = p.kernels.reshape(kh * kw * cin, cout)
    out = (cols @ w_mat + p.biases).reshape(n, oh, ow, cout)
    return out, ConvCache(cols, tuple(x.shape), (oh, ow))


def conv_backward_batch(
    cache: ConvCache, p: ConvParams, out_grad: Tensor, need_input_grad: bool = True
) -> tuple[Tensor | None, dict[str, Tensor]]:
    kh, kw, cin, cout = p.kernels.shape
    n = cache.input_shape[0]
    oh, ow = cache.out_hw
    if tuple(out_grad.shape) != (n, oh, ow, cout):
        raise ShapeError(f"out_grad: expected {(n, oh, ow, cout)}, got {tuple(out_grad.shape)}")
    g_mat = out_grad.reshape(n * oh * ow, cout)
    grads = {
        "kernels": (cache.cols.T @ g_mat).reshape(p.kernels.shape),
        "biases": g_mat.sum(axis=0),
    }
    if not need_input_grad:
        return None, grads
    s = p.stride
    w_mat = p.kernels.reshape(kh * kw * cin, cout)
    dcols = (g_mat @ w_mat.T).reshape(n, oh, ow, kh, kw, cin)
    d_input = np.zeros(cache.input_shape)
    for a in range(kh):
        for b in range(kw):
            d_input[:, a : a + s * (oh - 1) + 1 : s, b : b + s * (ow - 1) + 1 : s, :] += dcols[
                :, :, :, a, b, :
            ]
    return d_input, grads


def maxpool_forward_batch(x: Tensor, p: PoolParams) -> tuple[Tensor, BatchPoolRecord]:
    if p.window != p.stride:
        raise ConfigError("batched pooling supports window == stride only")
    if x.ndim != 4:
        raise ShapeError(f"batched pool input must be (N, H, W, C), got {tuple(x.shape)}")
    n, h, w, c = x.shape
    k = p.window
    if h < k or w < k:
        raise ShapeError(f"pool input {h}x{w} is smaller than the {k}x{k} window")
    oh, ow = h // k, w // k
    blocks = x[:, : oh * k, : ow * k, :].reshape(n, oh, k, ow, k, c)
    flat = np.ascontiguousarray(blocks.transpose(0, 1, 3, 5, 2, 4)).reshape(n, oh, ow, c, k * k)
    argmax = flat.argmax(axis=4)
    out = np.take_along_axis(flat, argmax[..., None], axis=4)[..., 0]
    return np.ascontiguousarray(out), BatchPoolRecord(tuple(x.shape), k, argmax)


def maxpool_backward_batch(record: BatchPoolRecord, out_grad: Tensor) -> Tensor:
    if tuple(out_grad.shape) != record.argmax.shape:
        raise ShapeError(f"out_grad: expected {record.argmax.shape}, got {tuple(out_grad.shape)}")
    n, oh, ow, c = record.argmax.shape
    k = record.window
    scatter = np.zeros((n, oh, ow, c, k * k))
    np.put_along_axis(scatter, record.argmax[..., None], out_grad[..., None], axis=4)
    blocks = scatter.reshape(n, oh, ow, c, k, k).transpose(0, 1, 4, 2, 5, 3)
    d_input = np.zeros(record.input_shape)
    d_input[:, : oh * k, : ow * k, :] = blocks.reshape(n, oh * k, ow * k, c)
    return d_input


def dense_forward_batch(x: Tensor, p: DenseParams) -> Tensor:
    if x.ndim != 2 or x.shape[1] != p.weights.shape[0]:
        raise ShapeError(f"dense input: expected (N, {p.weights.shape[0]}), got {tuple(x.shape)}")
    return x @ p.weights + p.biases


def dense_backward_batch(
    x: Tensor, p: DenseParams, out_grad: Tensor
) -> tuple[Tensor, dict[str, Tensor]]:
    if out_grad.shape != (x.shape[0], p.weights.shape[1]):
        raise ShapeError(
            f"dense out_grad: expected {(x.shape[0], p.weights.shape[1])}, got {tuple(out_grad.shape)}"
        )
    grads = {"weights": x.T @ out_grad, "biases": out_grad.sum(axis=0)}
    return out_grad @ p.weights.T, grads


def sigmoid_batch(x: Tensor) -> Tensor:
    """Elementwise numerically stable sigmoid (branch on sign)."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out

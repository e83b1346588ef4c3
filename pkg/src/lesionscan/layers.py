"""Forward and backward passes for the individual layer types.

All spatial tensors are channels-last (height, width, channels). The
functions here operate on a single sample; the batched twins used by the
training loop live in :mod:`lesionscan.batchops` and are pinned against
these in the tests.

Every backward function returns the exact analytic gradient of
``sum(output * out_grad)``; the test suite checks each one with central
finite differences.

Conventions, chosen for determinism:

* convolution is cross-correlation (no kernel flip);
* ReLU's subgradient at exactly 0 is 0;
* max-pooling ties go to the first maximum in row-major scan order
  within the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass
class ConvParams:
    """Convolution kernels (kh, kw, in_channels, out_channels) and per-filter biases."""

    kernels: Tensor
    biases: Tensor
    stride: int = 1
    padding: str = "valid"

    def __post_init__(self) -> None:
        if self.kernels.ndim != 4:
            raise ShapeError(f"kernels must be (kh, kw, cin, cout), got {tuple(self.kernels.shape)}")
        if self.biases.shape != (self.kernels.shape[3],):
            raise ShapeError(
                f"biases must be ({self.kernels.shape[3]},), got {tuple(self.biases.shape)}"
            )
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.padding != "valid":
            raise ConfigError(f"only 'valid' padding is supported, got {self.padding!r}")

    @property
    def param_count(self) -> int:
        return self.kernels.size + self.biases.size

    def tensors(self) -> dict[str, Tensor]:
        return {"kernels": self.kernels, "biases": self.biases}


@dataclass
class PoolParams:
    window: int = 2
    stride: int = 2

    def __post_init__(self) -> None:
        if self.window < 1 or self.stride < 1:
            raise ConfigError(f"pool window and stride must be >= 1, got {self.window}/{self.stride}")


@dataclass
class DenseParams:
    """Fully connected weights (in_features, out_features) and biases."""

    weights: Tensor
    biases: Tensor

    def __post_init__(self) -> None:
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be (in, out), got {tuple(self.weights.shape)}")
        if self.biases.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"biases must be ({self.weights.shape[1]},), got {tuple(self.biases.shape)}"
            )

    @property
    def param_count(self) -> int:
        return self.weights.size + self.biases.size

    def tensors(self) -> dict[str, Tensor]:
        return {"weights": self.weights, "biases": self.biases}


@dataclass
class LayerGrad:
    """Gradients from one backward pass: w.r.t. the input and each parameter."""

    input_grad: Tensor
    param_grads: dict[str, Tensor]


@dataclass
class PoolRecord:
    """Forward-pass record needed to route pooling gradients back."""

    input_shape: tuple[int, ...]
    window: int
    stride: int
    argmax: np.ndarray  # (oh, ow, C) flat index into the window, row-major scan order


def conv_param_count(kh: int, kw: int, cin: int, cout: int) -> int:
    return (kh * kw * cin + 1) * cout


def dense_param_count(n_in: int, n_out: int) -> int:
    return (n_in + 1) * n_out


def conv_output_shape(input_shape: tuple[int, ...], p: ConvParams) -> tuple[int, int, int]:
    if len(input_shape) != 3:
        raise ShapeError(f"conv input must be (H, W, C), got {input_shape}")
    h, w, c = input_shape
    kh, kw, cin, cout = p.kernels.shape
    if c != cin:
        raise ShapeError(f"conv input has {c} channels, kernels expect {cin}")
    if h < kh or w < kw:
        raise ShapeError(f"conv input {h}x{w} is smaller than the {kh}x{kw} kernel")
    return (h - kh) // p.stride + 1, (w - kw) // p.stride + 1, cout


def pool_output_shape(input_shape: tuple[int, ...], p: PoolParams) -> tuple[int, int, int]:
    if len(input_shape) != 3:
        raise ShapeError(f"pool input must be (H, W, C), got {input_shape}")
    h, w, c = input_shape
    if h < p.window or w < p.window:
        raise ShapeError(f"pool input {h}x{w} is smaller than the {p.window}x{p.window} window")
    # floor semantics: a trailing odd row/column is dropped
    return (h - p.window) // p.stride + 1, (w - p.window) // p.stride + 1, c


def _windows(x: Tensor, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided view of all kh x kw windows: (oh, ow, C, kh, kw). No copy."""
    view = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
    return view[::stride, ::stride]


def conv2d_forward(x: Tensor, p: ConvParams) -> Tensor:
    """Valid cross-correlation: out(i,j,o) = bias(o) + sum_abc x(i*s+a, j*s+b, c) * k(a,b,c,o)."""
    oh, ow, cout = conv_output_shape(x.shape, p)
    kh, kw, _, _ = p.kernels.shape
    wins = _windows(x, kh, kw, p.stride)
    out = np.einsum("ijcab,abco->ijo", wins, p.kernels, optimize=True)
    out += p.biases
    return out


def conv2d_backward(x: Tensor, p: ConvParams, out_grad: Tensor) -> LayerGrad:
    oh, ow, cout = conv_output_shape(x.shape, p)
    if tuple(out_grad.shape) != (oh, ow, cout):
        raise ShapeError(f"out_grad: expected {(oh, ow, cout)}, got {tuple(out_grad.shape)}")
    kh, kw, cin, _ = p.kernels.shape
    s = p.stride
    wins = _windows(x, kh, kw, s)
    d_kernels = np.einsum("ijcab,ijo->abco", wins, out_grad, optimize=True)
    d_biases = out_grad.sum(axis=(0, 1))
    d_input = np.zeros_like(x)
    for a in range(kh):
        for b in range(kw):
            # every kernel tap (a, b) contributes to a strided slice of the input
            d_input[a : a + s * (oh - 1) + 1 : s, b : b + s * (ow - 1) + 1 : s, :] += np.einsum(
                "ijo,co->ijc", out_grad, p.kernels[a, b], optimize=True
            )
    return LayerGrad(input_grad=d_input, param_grads={"kernels": d_kernels, "biases": d_biases})


def maxpool_forward(x: Tensor, p: PoolParams) -> tuple[Tensor, PoolRecord]:
    oh, ow, c = pool_output_shape(x.shape, p)
    wins = _windows(x, p.window, p.window, p.stride)
    flat = wins.reshape(oh, ow, c, p.window * p.window)
    # argmax picks the first maximum, i.e. row-major scan order within the window
    argmax = flat.argmax(axis=3)
    out = np.take_along_axis(flat, argmax[..., None], axis=3)[..., 0]
    return np.ascontiguousarray(out), PoolRecord(tuple(x.shape), p.window, p.stride, argmax)


def maxpool_backward(record: PoolRecord, out_grad: Tensor) -> Tensor:
    if tuple(out_grad.shape) != record.argmax.shape:
        raise ShapeError(
            f"out_grad: expected {record.argmax.shape}, got {tuple(out_grad.shape)}"
        )
    oh, ow, c = record.argmax.shape
    rows = record.argmax // record.window
    cols = record.argmax % record.window
    i = np.arange(oh)[:, None, None] * record.stride + rows
    j = np.arange(ow)[None, :, None] * record.stride + cols
    ch = np.broadcast_to(np.arange(c)[None, None, :], record.argmax.shape)
    d_input = np.zeros(record.input_shape)
    np.add.at(d_input, (i, j, ch), out_grad)
    return d_input


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(x: Tensor, out_grad: Tensor) -> Tensor:
    if x.shape != out_grad.shape:
        raise ShapeError(f"relu out_grad {tuple(out_grad.shape)} != input {tuple(x.shape)}")
    return out_grad * (x > 0.0)


def dropout(
    x: Tensor, rate: float, mode: str, rng: np.random.Generator | None = None
) -> tuple[Tensor, Tensor]:
    """Inverted dropout.

    In train mode each element is zeroed independently with probability
    ``rate`` and survivors are scaled by 1/(1-rate), so inference is a pure
    identity. Returns (output, mask); multiplying an upstream gradient by
    the mask is the exact backward pass.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "infer"):
        raise ConfigError(f"dropout mode must be 'train' or 'infer', got {mode!r}")
    if mode == "infer" or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ConfigError("train-mode dropout requires an explicit rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(np.float64) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask: Tensor, out_grad: Tensor) -> Tensor:
    if mask.shape != out_grad.shape:
        raise ShapeError(f"dropout out_grad {tuple(out_grad.shape)} != mask {tuple(mask.shape)}")
    return out_grad * mask


def dense_forward(x: Tensor, p: DenseParams) -> Tensor:
    if x.shape != (p.weights.shape[0],):
        raise ShapeError(f"dense input: expected ({p.weights.shape[0]},), got {tuple(x.shape)}")
    return x @ p.weights + p.biases


def dense_backward(x: Tensor, p: DenseParams, out_grad: Tensor) -> LayerGrad:
    if x.shape != (p.weights.shape[0],):
        raise ShapeError(f"dense input: expected ({p.weights.shape[0]},), got {tuple(x.shape)}")
    if out_grad.shape != (p.weights.shape[1],):
        raise ShapeError(f"dense out_grad: expected ({p.weights.shape[1]},), got {tuple(out_grad.shape)}")
    return LayerGrad(
        input_grad=p.weights @ out_grad,
        param_grads={"weights": np.outer(x, out_grad), "biases": out_grad.copy()},
    )


def sigmoid(x: float) -> float:
    """Logistic function, branch on sign so exp never overflows."""
    x = float(x)
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def sigmoid_grad(y: float) -> float:
    """Derivative of the sigmoid expressed through its output y = sigmoid(x)."""
    return y * (1.0 - y)

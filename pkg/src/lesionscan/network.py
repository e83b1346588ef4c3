"""Assembly, execution, and persistence of the DisorderNet classifier.

DisorderNet is a small sequential CNN over 50x50 RGB patches:

    Conv3x3(32) -> Pool2 -> Conv3x3(64) -> Pool2 -> Conv3x3(128) -> Pool2
    -> Conv3x3(128) -> Pool2 -> Flatten -> Dropout -> Dense(512, ReLU)
    -> Dense(1, Sigmoid)

All convolutions are 3x3, stride 1, valid padding; all pools are 2x2 with
stride 2 and floor semantics. That combination is the unique one consistent
with the canonical shape chain (50->48->24->22->11->9->4->2->1) and the
per-layer parameter counts asserted in the tests; see the README for the
derivation. The sigmoid head follows from the single-unit binary output.

A :class:`NetworkSpec` is the declarative single source of truth for shapes
and parameter counts; :class:`NetworkState` adds the actual weights, the
train/infer mode, and the seed it was built from. Two execution paths share
those weights: a single-sample path built on :mod:`.layers` and a batched
path built on :mod:`.batchops`; they agree to float64 round-off and the
tests hold them against each other.

Model files are a small self-describing binary container (magic ``DNET``,
JSON header, raw little-endian float64 payload); see :func:`save_model`.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import batchops, layers
from .errors import ConfigError, ModelFormatError, ShapeError
from .layers import ConvParams, DenseParams, PoolParams
from .tensor import Tensor

INPUT_SHAPE = (50, 50, 3)

MODEL_MAGIC = b"DNET"
MODEL_VERSION = 1
_HEADER_STRUCT = struct.Struct("<4sHI")  # magic, version, header byte length

_KINDS = ("conv", "pool", "flatten", "dropout", "dense")
_ACTIVATIONS = ("", "relu", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    """One row of the network description.

    kind:       conv | pool | flatten | dropout | dense
    filters:    conv output channels
    kernel:     conv kernel side (square)
    window:     pool window side (stride equals window)
    units:      dense output features
    rate:       dropout probability
    activation: "" | relu | sigmoid, applied after conv/dense
    """

    kind: str
    filters: int = 0
    kernel: int = 3
    window: int = 2
    units: int = 0
    rate: float = 0.0
    activation: str = ""

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.kind == "conv" and (self.filters < 1 or self.kernel < 1):
            raise ConfigError(f"conv layer needs filters >= 1 and kernel >= 1: {self}")
        if self.kind == "dense" and self.units < 1:
            raise ConfigError(f"dense layer needs units >= 1: {self}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]


def disordernet_spec(dropout_rate: float = 0.5) -> NetworkSpec:
    """The canonical 12-layer DisorderNet stack."""
    rows = [
        LayerSpec("conv", filters=32, activation="relu"),
        LayerSpec("pool"),
        LayerSpec("conv", filters=64, activation="relu"),
        LayerSpec("pool"),
        LayerSpec("conv", filters=128, activation="relu"),
        LayerSpec("pool"),
        LayerSpec("conv", filters=128, activation="relu"),
        LayerSpec("pool"),
        LayerSpec("flatten"),
        LayerSpec("dropout", rate=dropout_rate),
        LayerSpec("dense", units=512, activation="relu"),
        LayerSpec("dense", units=1, activation="sigmoid"),
    ]
    return NetworkSpec(input_shape=INPUT_SHAPE, layers=tuple(rows))


def shape_chain(spec: NetworkSpec) -> list[tuple[int, ...]]:
    """Output shape of every layer, in order, starting from spec.input_shape."""
    shapes: list[tuple[int, ...]] = []
    current: tuple[int, ...] = tuple(spec.input_shape)
    for row in spec.layers:
        if row.kind == "conv":
            if len(current) != 3:
                raise ShapeError(f"conv expects a (H, W, C) input, got {current}")
            h, w, _ = current
            if h < row.kernel or w < row.kernel:
                raise ShapeError(f"conv kernel {row.kernel} does not fit input {current}")
            current = (h - row.kernel + 1, w - row.kernel + 1, row.filters)
        elif row.kind == "pool":
            if len(current) != 3:
                raise ShapeError(f"pool expects a (H, W, C) input, got {current}")
            h, w, c = current
            if h < row.window or w < row.window:
                raise ShapeError(f"pool window {row.window} does not fit input {current}")
            current = (h // row.window, w // row.window, c)
        elif row.kind == "flatten":
            current = (math.prod(current),)
        elif row.kind == "dropout":
            pass
        elif row.kind == "dense":
            if len(current) != 1:
                raise ShapeError(f"dense expects a flat input, got {current}")
            current = (row.units,)
        shapes.append(current)
    return shapes


def layer_param_counts(spec: NetworkSpec) -> list[int]:
    """Trainable parameter count per layer row (0 for parameterless rows)."""
    counts: list[int] = []
    current: tuple[int, ...] = tuple(spec.input_shape)
    for row, out_shape in zip(spec.layers, shape_chain(spec)):
        if row.kind == "conv":
            counts.append(layers.conv_param_count(row.kernel, row.kernel, current[2], row.filters))
        elif row.kind == "dense":
            counts.append(layers.dense_param_count(current[0], row.units))
        else:
            counts.append(0)
        current = out_shape
    return counts


def total_param_count(spec: NetworkSpec) -> int:
    return sum(layer_param_counts(spec))


@dataclass
class NetworkState:
    """A network specification plus its weights, mode, and build seed."""

    spec: NetworkSpec
    params: list[ConvParams | DenseParams | None]
    mode: str = "infer"
    seed: int = 0

    def param_tensors(self) -> list[dict[str, Tensor] | None]:
        return [p.tensors() if p is not None else None for p in self.params]

    def total_param_count(self) -> int:
        return sum(p.param_count for p in self.params if p is not None)


def build_network(spec: NetworkSpec, seed: int = 0) -> NetworkState:
    """Seeded initialization: He-uniform before ReLU, Glorot-uniform otherwise.

    Biases start at zero. Two builds with the same seed are bitwise
    identical; per-layer streams are spawned from one root SeedSequence so
    adding a layer does not reshuffle the others.
    """
    chain = shape_chain(spec)  # validates the stack wiring up front
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(spec.layers))]
    params: list[ConvParams | DenseParams | None] = []
    current: tuple[int, ...] = tuple(spec.input_shape)
    for row, rng, out_shape in zip(spec.layers, rngs, chain):
        if row.kind == "conv":
            fan_in = row.kernel * row.kernel * current[2]
            limit = math.sqrt(6.0 / fan_in)  # He uniform; every conv here feeds a ReLU
            kernels = rng.uniform(-limit, limit, (row.kernel, row.kernel, current[2], row.filters))
            params.append(ConvParams(kernels=kernels, biases=np.zeros(row.filters)))
        elif row.kind == "dense":
            fan_in, fan_out = current[0], row.units
            if row.activation == "relu":
                limit = math.sqrt(6.0 / fan_in)
            else:
                limit = math.sqrt(6.0 / (fan_in + fan_out))  # Glorot for the sigmoid head
            weights = rng.uniform(-limit, limit, (fan_in, fan_out))
            params.append(DenseParams(weights=weights, biases=np.zeros(fan_out)))
        else:
            params.append(None)
        current = out_shape
    return NetworkState(spec=spec, params=params, mode="infer", seed=seed)


def build_disordernet(seed: int = 0, dropout_rate: float = 0.5) -> NetworkState:
    return build_network(disordernet_spec(dropout_rate), seed=seed)


# --- single-sample execution ---


def forward(
    net: NetworkState, x: Tensor, rng: np.random.Generator | None = None
) -> tuple[float, list[Tensor] | None]:
    """Classify one patch; returns (lesion probability, activation trace).

    The trace holds every layer output in order and is kept only in train
    mode (None in infer mode, where forward is a pure function of x).
    Train-mode dropout draws from ``rng``; if none is given a deterministic
    generator is derived from the network seed.
    """
    if tuple(x.shape) != tuple(net.spec.input_shape):
        raise ShapeError(f"input: expected {tuple(net.spec.input_shape)}, got {tuple(x.shape)}")
    training = net.mode == "train"
    if training and rng is None:
        rng = np.random.default_rng(net.seed)
    trace: list[Tensor] | None = [] if training else None
    h = x
    for row, p in zip(net.spec.layers, net.params):
        if row.kind == "conv":
            h = layers.conv2d_forward(h, p)
            if row.activation == "relu":
                h = layers.relu(h)
        elif row.kind == "pool":
            h, _ = layers.maxpool_forward(h, PoolParams(row.window, row.window))
        elif row.kind == "flatten":
            h = np.ascontiguousarray(h).reshape(-1)
        elif row.kind == "dropout":
            h, _ = layers.dropout(h, row.rate, net.mode, rng)
        elif row.kind == "dense":
            h = layers.dense_forward(h, p)
            if row.activation == "relu":
                h = layers.relu(h)
            elif row.activation == "sigmoid":
                h = np.array([layers.sigmoid(v) for v in h])
        if trace is not None:
            trace.append(h)
    return float(h[0]), trace


def predict(net: NetworkState, x: Tensor, threshold: float = 0.5) -> str:
    """Binary decision: "lesion" iff score >= threshold, else "healthy"."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0, 1), got {threshold}")
    score, _ = forward(net, x)
    return "lesion" if score >= threshold else "healthy"


# --- batched execution (training loop and scanner) ---
#
# Cache entries, one per layer, holding exactly what backward needs:
#   conv:    ("conv", ConvCache, z) with z the pre-ReLU output (None if linear)
#   pool:    ("pool", BatchPoolRecord)
#   flatten: ("flatten", input_shape)
#   dropout: ("dropout", mask)
#   dense:   ("dense", x_in, z, y) with z pre-activation, y the sigmoid
#            output when that activation is in effect (else None)


def forward_batch(
    net: NetworkState,
    x: Tensor,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, list | None]:
    """Forward a (N, H, W, C) batch; returns (scores (N,), cache or None).

    The cache is built only when ``training`` is true and feeds
    :func:`backward_batch`. Dropout in training mode requires ``rng``.
    """
    if x.ndim != 4 or tuple(x.shape[1:]) != tuple(net.spec.input_shape):
        expected = ", ".join(map(str, net.spec.input_shape))
        raise ShapeError(f"batch input: expected (N, {expected}), got {tuple(x.shape)}")
    cache: list | None = [] if training else None
    h = x
    for row, p in zip(net.spec.layers, net.params):
        entry: tuple | None = None
        if row.kind == "conv":
            z, conv_cache = batchops.conv_forward_batch(h, p)
            if row.activation == "relu":
                h = layers.relu(z)
                entry = ("conv", conv_cache, z)
            else:
                h, entry = z, ("conv", conv_cache, None)
        elif row.kind == "pool":
            h, record = batchops.maxpool_forward_batch(h, PoolParams(row.window, row.window))
            entry = ("pool", record)
        elif row.kind == "flatten":
            entry = ("flatten", h.shape)
            h = h.reshape(h.shape[0], -1)
        elif row.kind == "dropout":
            h, mask = layers.dropout(h, row.rate, "train" if training else "infer", rng)
            entry = ("dropout", mask)
        elif row.kind == "dense":
            x_in = h
            z = batchops.dense_forward_batch(h, p)
            if row.activation == "relu":
                h = layers.relu(z)
                entry = ("dense", x_in, z, None)
            elif row.activation == "sigmoid":
                h = batchops.sigmoid_batch(z)
                entry = ("dense", x_in, z, h)
            else:
                h, entry = z, ("dense", x_in, z, None)
        if cache is not None:
            cache.append(entry)
    scores = np.ascontiguousarray(h[:, 0])
    return scores, cache


def backward_batch(
    net: NetworkState, cache: list, d_scores: Tensor
) -> list[dict[str, Tensor] | None]:
    """Parameter gradients given d loss / d score for a cached batch forward.

    Returns one {"kernels"/"weights": ..., "biases": ...} dict per layer row
    (None for parameterless rows), shapes matching the parameters. The
    first conv sits on the raw input, so its input gradient is skipped.
    """
    if len(cache) != len(net.spec.layers):
        raise ConfigError(f"cache has {len(cache)} entries for {len(net.spec.layers)} layers")
    grads: list[dict[str, Tensor] | None] = [None] * len(net.spec.layers)
    first_conv = next(
        (i for i, row in enumerate(net.spec.layers) if row.kind == "conv"),
        None,
    )
    g: Tensor = d_scores.reshape(-1, 1)
    for i in range(len(net.spec.layers) - 1, -1, -1):
        row, p, entry = net.spec.layers[i], net.params[i], cache[i]
        if row.kind == "conv":
            _, conv_cache, z = entry
            if row.activation == "relu":
                g = layers.relu_backward(z, g)
            need_input = i != first_conv
            d_in, conv_grads = batchops.conv_backward_batch(
                conv_cache, p, g, need_input_grad=need_input
            )
            grads[i] = conv_grads
            if not need_input:
                break
            g = d_in
        elif row.kind == "pool":
            g = batchops.maxpool_backward_batch(entry[1], g)
        elif row.kind == "flatten":
            g = g.reshape(entry[1])
        elif row.kind == "dropout":
            g = layers.dropout_backward(entry[1], g)
        elif row.kind == "dense":
            _, x_in, z, y = entry
            if row.activation == "relu":
                g = layers.relu_backward(z, g)
            elif row.activation == "sigmoid":
                g = g * (y * (1.0 - y))
            g, grads[i] = batchops.dense_backward_batch(x_in, p, g)
    return grads


def score_patches(
    net: NetworkState, patches: Tensor, chunk_size: int = 256
) -> Tensor:
    """Lesion probability for each patch in a (N, H, W, C) stack.

    Runs in chunks to bound the im2col working set; infer mode only.
    """
    if chunk_size < 1:
        raise ConfigError(f"chunk_size must be >= 1, got {chunk_size}")
    if patches.shape[0] == 0:
        return np.zeros(0)
    out = np.empty(patches.shape[0])
    for start in range(0, patches.shape[0], chunk_size):
        stop = min(start + chunk_size, patches.shape[0])
        out[start:stop], _ = forward_batch(net, patches[start:stop], training=False)
    return out


# --- persistence ---
#
# Byte layout:
#   [0:4)   magic b"DNET"
#   [4:6)   format version, u16 little-endian
#   [6:10)  header length in bytes, u32 little-endian
#   [10:10+hlen) UTF-8 JSON header:
#       {"input_shape": [...], "seed": ..., "layers": [{LayerSpec
#        fields}...], "tensors": [[layer_idx, name, [shape...]], ...]}
#   then, per tensors-table row in order, the raw little-endian float64
#   C-order payload. No padding, no trailing bytes.


def _layer_to_json(row: LayerSpec) -> dict:
    return {
        "kind": row.kind,
        "filters": row.filters,
        "kernel": row.kernel,
        "window": row.window,
        "units": row.units,
        "rate": row.rate,
        "activation": row.activation,
    }


def save_model(net: NetworkState, path) -> None:
    """Write the network to ``path`` in the DNET container format.

    Weights are stored as raw little-endian float64, so a load followed by
    a forward pass reproduces the saved network's outputs bit for bit.
    """
    tensor_table: list[list] = []
    payload: list[bytes] = []
    for i, p in enumerate(net.params):
        if p is None:
            continue
        for name, tensor in sorted(p.tensors().items()):
            tensor_table.append([i, name, list(tensor.shape)])
            payload.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    header = {
        "input_shape": list(net.spec.input_shape),
        "seed": net.seed,
        "layers": [_layer_to_json(row) for row in net.spec.layers],
        "tensors": tensor_table,
    }
    header_bytes = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER_STRUCT.pack(MODEL_MAGIC, MODEL_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for chunk in payload:
            fh.write(chunk)


def load_model(path) -> NetworkState:
    """Read a DNET container back into a NetworkState (infer mode).

    Malformed files raise :class:`ModelFormatError` naming the byte offset
    of the problem.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER_STRUCT.size:
        raise ModelFormatError(
            f"file is {len(blob)} bytes, shorter than the {_HEADER_STRUCT.size}-byte fixed header"
        )
    magic, version, header_len = _HEADER_STRUCT.unpack_from(blob, 0)
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r} at offset 0, expected {MODEL_MAGIC!r}")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported format version {version} at offset 4")
    header_start = _HEADER_STRUCT.size
    header_end = header_start + header_len
    if header_end > len(blob):
        raise ModelFormatError(
            f"header claims {header_len} bytes at offset {header_start} "
            f"but the file ends at {len(blob)}"
        )
    try:
        header = json.loads(blob[header_start:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"header at offset {header_start} is not valid JSON: {exc}") from exc
    for key in ("input_shape", "seed", "layers", "tensors"):
        if key not in header:
            raise ModelFormatError(f"header is missing the {key!r} field")
    try:
        rows = tuple(LayerSpec(**row) for row in header["layers"])
        spec = NetworkSpec(input_shape=tuple(header["input_shape"]), layers=rows)
    except (TypeError, ConfigError) as exc:
        raise ModelFormatError(f"header layer table is invalid: {exc}") from exc
    net = build_network(spec, seed=int(header["seed"]))

    expected: dict[tuple[int, str], tuple[int, ...]] = {}
    for i, p in enumerate(net.params):
        if p is not None:
            for name, tensor in p.tensors().items():
                expected[(i, name)] = tensor.shape
    offset = header_end
    seen: set[tuple[int, str]] = set()
    for row in header["tensors"]:
        try:
            layer_idx, name, shape = int(row[0]), str(row[1]), tuple(int(d) for d in row[2])
        except (TypeError, ValueError, IndexError) as exc:
            raise ModelFormatError(f"malformed tensors-table row {row!r}: {exc}") from exc
        key = (layer_idx, name)
        if key not in expected:
            raise ModelFormatError(f"tensor {name!r} does not belong to layer {layer_idx}")
        if key in seen:
            raise ModelFormatError(f"duplicate tensor {name!r} for layer {layer_idx}")
        if shape != expected[key]:
            raise ModelFormatError(
                f"tensor {name!r} of layer {layer_idx}: header shape {shape} "
                f"does not match the architecture's {expected[key]}"
            )
        count = math.prod(shape)
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise ModelFormatError(
                f"payload for layer {layer_idx} tensor {name!r} at offset {offset} "
                f"needs {nbytes} bytes but only {len(blob) - offset} remain"
            )
        values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        p = net.params[layer_idx]
        if name == "kernels":
            p.kernels[...] = values
        elif name == "weights":
            p.weights[...] = values
        else:
            p.biases[...] = values
        seen.add(key)
        offset += nbytes
    missing = sorted(set(expected) - seen)
    if missing:
        raise ModelFormatError(f"model file is missing tensors: {missing}")
    if offset != len(blob):
        raise ModelFormatError(
            f"{len(blob) - offset} trailing bytes after the last tensor at offset {offset}"
        )
    net.mode = "infer"
    return net

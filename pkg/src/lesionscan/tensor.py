"""Dense float64 tensors with strict shape algebra.

A tensor is a C-contiguous ``numpy.float64`` array in channels-last layout:
images are (height, width, channels) and batches are (batch, height, width,
channels). Nothing in this package broadcasts; any shape disagreement is an
error, which catches wiring bugs early. Values are double precision
throughout so gradient checks can run at tight tolerances.

Tensors are treated as immutable after construction: operations return new
arrays. The only sanctioned in-place mutation is the optimizer update in
:mod:`lesionscan.training`, which runs single-threaded.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError

Tensor = np.ndarray

Shape = tuple[int, ...]

MAX_RANK = 4


def check_shape(dims: Sequence[int]) -> Shape:
    """Validate and normalize a shape: rank 1..4, every dim >= 1."""
    shape = tuple(int(d) for d in dims)
    if not 1 <= len(shape) <= MAX_RANK:
        raise ShapeError(f"shape rank must be 1..{MAX_RANK}, got {len(shape)} in {shape}")
    for d in shape:
        if d < 1:
            raise ShapeError(f"every dimension must be >= 1, got {shape}")
    return shape


def element_count(shape: Sequence[int]) -> int:
    return math.prod(check_shape(shape))


def new_tensor(shape: Sequence[int], fill: float = 0.0) -> Tensor:
    """Tensor of the given shape with every element set to ``fill``."""
    shape = check_shape(shape)
    fill = float(fill)
    if not math.isfinite(fill):
        raise ValueError(f"fill value must be finite, got {fill}")
    return np.full(shape, fill, dtype=np.float64)


def as_tensor(values, shape: Sequence[int] | None = None) -> Tensor:
    """Copy ``values`` into a contiguous float64 tensor, optionally reshaped."""
    arr = np.array(values, dtype=np.float64, order="C")
    if shape is not None:
        arr = reshape(arr, shape)
    check_shape(arr.shape)
    return arr


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    """Reinterpret ``t`` with a new shape; the row-major data order is preserved."""
    new_shape = check_shape(new_shape)
    if t.size != math.prod(new_shape):
        raise ShapeError(
            f"cannot reshape {tuple(t.shape)} ({t.size} elements) "
            f"to {new_shape} ({math.prod(new_shape)} elements)"
        )
    return np.ascontiguousarray(t, dtype=np.float64).reshape(new_shape)


def map2(a: Tensor, b: Tensor, f: Callable[[Tensor, Tensor], Tensor]) -> Tensor:
    """Apply an elementwise binary function to two same-shaped tensors.

    ``f`` must operate elementwise on arrays (arithmetic expressions and
    numpy ufuncs qualify). Shapes must match exactly; there is no
    broadcasting.
    """
    if tuple(a.shape) != tuple(b.shape):
        raise ShapeError(f"map2 operands differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
    out = np.asarray(f(a, b), dtype=np.float64)
    if out.shape != a.shape:
        raise ShapeError(f"map2 function is not elementwise: produced {out.shape} from {a.shape}")
    return out


def require_shape(t: Tensor, shape: Sequence[int], what: str = "tensor") -> None:
    """Raise ShapeError unless ``t`` has exactly the given shape."""
    if tuple(t.shape) != tuple(shape):
        raise ShapeError(f"{what}: expected shape {tuple(shape)}, got {tuple(t.shape)}")

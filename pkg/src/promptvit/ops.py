# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
Differentiable operations on [promptvit.core.Tensor][].

There is no broadcasting beyond tensor-with-scalar: binary operations need equal shapes, or a second operand that
is a Python number or a single-element tensor. Shape errors raise [promptvit.core.ShapeMismatch][].
"""

import math
from typing import Sequence

import numpy as np

from .core import InvalidAxis, ShapeMismatch, Tensor, apply_op
from .types import Scalar
from .util import StringHolderEnum


class ElementwiseKind(metaclass=StringHolderEnum):
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    SCALE = "scale"
    CLIP_MAX = "clip_max"
    MAXIMUM = "maximum"
    MINIMUM = "minimum"
    GELU = "gelu"
    EXP = "exp"
    LOG = "log"
    ABS = "abs"
    SIGMOID = "sigmoid"
    NEG = "neg"


_CONSTANT_OPERAND = {"scale", "clip_max"}
_UNARY = {"gelu", "exp", "log", "abs", "sigmoid", "neg"}

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _is_number(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool)


def _as_operand(a: Tensor, b) -> tuple[Tensor, bool]:
    """Returns ``b`` as a tensor and whether it is used as a scalar against ``a``."""
    if _is_number(b):
        return Tensor(np.array([float(b)])), True
    if not isinstance(b, Tensor):
        raise TypeError(f"Expected a Tensor or a number, got {type(b)}")
    if b.shape == a.shape:
        return b, False
    if b.size == 1:
        return b, True
    raise ShapeMismatch(f"Shapes {a.shape} and {b.shape} are incompatible (only scalar broadcasting is supported)")


def _reduce_to(g: np.ndarray, operand: Tensor, is_scalar: bool) -> np.ndarray:
    if is_scalar:
        return np.full(operand.shape, g.sum())
    return g


def elementwise(kind: str, a: Tensor, b: Tensor | Scalar | None = None) -> Tensor:
    """
    Applies an elementwise operation. The output has the shape of ``a``.

    * binary kinds (add, sub, mul, div, maximum, minimum): ``b`` has ``a``'s shape, or is a number or single-element
      tensor. ``maximum``/``minimum`` send the gradient to ``a`` on ties.
    * scale: multiplies by the constant ``b``.
    * clip_max: ``min(a, b)`` for a constant ``b``, with subgradient 0 at and above ``b``.
    * unary kinds (gelu, exp, log, abs, sigmoid, neg): ``b`` must be None. gelu is the tanh approximation.
    """
    if kind not in ElementwiseKind:
        raise ValueError(f"Unknown elementwise kind {kind!r}")

    if kind in _UNARY:
        if b is not None:
            raise ValueError(f"{kind} takes a single operand")
        return _unary(kind, a)

    if kind in _CONSTANT_OPERAND:
        if isinstance(b, Tensor):
            if b.size != 1:
                raise ShapeMismatch(f"{kind} needs a scalar constant, got shape {b.shape}")
            c = b.item()
        elif _is_number(b):
            c = float(b)  # type: ignore
        else:
            raise TypeError(f"{kind} needs a numeric constant, got {type(b)}")
        return _with_constant(kind, a, c)

    if b is None:
        raise ValueError(f"{kind} needs two operands")
    b_t, b_scalar = _as_operand(a, b)
    return _binary(kind, a, b_t, b_scalar)


def _binary(kind: str, a: Tensor, b: Tensor, b_scalar: bool) -> Tensor:
    av = a.value
    bv = b.value.reshape(-1)[0] if b_scalar else b.value

    if kind == "add":
        out = av + bv
        return apply_op(kind, out, (a, b), lambda g: (g, _reduce_to(g, b, b_scalar)))
    if kind == "sub":
        out = av - bv
        return apply_op(kind, out, (a, b), lambda g: (g, _reduce_to(-g, b, b_scalar)))
    if kind == "mul":
        out = av * bv
        return apply_op(kind, out, (a, b), lambda g: (g * bv, _reduce_to(g * av, b, b_scalar)))
    if kind == "div":
        out = av / bv
        return apply_op(kind, out, (a, b), lambda g: (g / bv, _reduce_to(-g * av / (bv * bv), b, b_scalar)))
    if kind in ("maximum", "minimum"):
        to_a = av >= bv if kind == "maximum" else av <= bv
        out = np.where(to_a, av, bv)
        return apply_op(
            kind, out, (a, b), lambda g: (np.where(to_a, g, 0.0), _reduce_to(np.where(to_a, 0.0, g), b, b_scalar))
        )
    raise AssertionError(kind)


def _with_constant(kind: str, a: Tensor, c: float) -> Tensor:
    av = a.value
    if kind == "scale":
        return apply_op(kind, av * c, (a,), lambda g: (g * c,))
    below = av < c
    out = np.where(below, av, c)
    return apply_op(kind, out, (a,), lambda g: (np.where(below, g, 0.0),))


def _unary(kind: str, a: Tensor) -> Tensor:
    x = a.value
    if kind == "neg":
        return apply_op(kind, -x, (a,), lambda g: (-g,))
    if kind == "exp":
        y = np.exp(x)
        return apply_op(kind, y, (a,), lambda g: (g * y,))
    if kind == "log":
        return apply_op(kind, np.log(x), (a,), lambda g: (g / x,))
    if kind == "abs":
        return apply_op(kind, np.abs(x), (a,), lambda g: (g * np.sign(x),))
    if kind == "sigmoid":
        y = 0.5 * (1.0 + np.tanh(0.5 * x))
        return apply_op(kind, y, (a,), lambda g: (g * y * (1.0 - y),))
    if kind == "gelu":
        inner = _GELU_C * (x + _GELU_A * x**3)
        t = np.tanh(inner)
        y = 0.5 * x * (1.0 + t)

        def _gelu_backward(g):
            d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)
            return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

        return apply_op(kind, y, (a,), _gelu_backward)
    raise AssertionError(kind)


def add(a: Tensor, b: Tensor | Scalar) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b: Tensor | Scalar) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Tensor, b: Tensor | Scalar) -> Tensor:
    return elementwise("mul", a, b)


def div(a: Tensor, b: Tensor | Scalar) -> Tensor:
    return elementwise("div", a, b)


def scale(a: Tensor, c: Scalar) -> Tensor:
    return elementwise("scale", a, c)


def clip_max(a: Tensor, c: Scalar) -> Tensor:
    return elementwise("clip_max", a, c)


def maximum(a: Tensor, b: Tensor | Scalar) -> Tensor:
    return elementwise("maximum", a, b)


def minimum(a: Tensor, b: Tensor | Scalar) -> Tensor:
    return elementwise("minimum", a, b)


def gelu(a: Tensor) -> Tensor:
    return elementwise("gelu", a)


def exp(a: Tensor) -> Tensor:
    return elementwise("exp", a)


def log(a: Tensor) -> Tensor:
    return elementwise("log", a)


def abs(a: Tensor) -> Tensor:
    return elementwise("abs", a)


def sigmoid(a: Tensor) -> Tensor:
    return elementwise("sigmoid", a)


def neg(a: Tensor) -> Tensor:
    return elementwise("neg", a)


def square(a: Tensor) -> Tensor:
    return mul(a, a)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """[m,k] @ [k,p] -> [m,p]. Backward: dA = dC·Bᵀ, dB = Aᵀ·dC."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"Inner dimensions disagree: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return apply_op("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeMismatch(f"transpose needs a 2-d tensor, got {x.shape}")
    return apply_op("transpose", x.value.T, (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape) or math.prod(shape) != x.size:
        raise ShapeMismatch(f"Cannot reshape {x.shape} to {shape}")
    return apply_op("reshape", x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def _check_axis(x: Tensor, axis: int) -> int:
    if not isinstance(axis, (int, np.integer)) or not -x.ndim <= axis < x.ndim:
        raise InvalidAxis(f"Axis {axis} is out of range for shape {x.shape}")
    return int(axis) % x.ndim


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """``x[..., start:stop, ...]`` along ``axis``. The gradient is scattered back into zeros."""
    axis = _check_axis(x, axis)
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeMismatch(f"Slice [{start}:{stop}] is empty or outside dimension {x.shape[axis]}")
    index = tuple(slice(start, stop) if i == axis else slice(None) for i in range(x.ndim))

    def _slice_backward(g):
        full = np.zeros(x.shape)
        full[index] = g
        return (full,)

    return apply_op("slice", x.value[index], (x,), _slice_backward)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    """Joins tensors along ``axis``; all other dimensions must agree."""
    parts = list(parts)
    if not parts:
        raise ShapeMismatch("concat needs at least one part")
    axis = _check_axis(parts[0], axis)
    first = parts[0]
    for p in parts[1:]:
        if p.ndim != first.ndim or any(p.shape[i] != first.shape[i] for i in range(first.ndim) if i != axis):
            raise ShapeMismatch(f"Cannot concat {first.shape} and {p.shape} along axis {axis}")

    offsets = np.cumsum([0] + [p.shape[axis] for p in parts])
    out = np.concatenate([p.value for p in parts], axis=axis)

    def _concat_backward(g):
        return tuple(np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis) for i in range(len(parts)))

    return apply_op("concat", out, parts, _concat_backward)


def repeat_rows(x: Tensor, rows: int) -> Tensor:
    """Stacks ``rows`` copies of a [1,d] (or [d]) tensor into [rows,d], as ones[rows,1] @ x."""
    if x.ndim == 1:
        x = reshape(x, (1, x.shape[0]))
    if x.ndim != 2 or x.shape[0] != 1:
        raise ShapeMismatch(f"repeat_rows needs a single row, got {x.shape}")
    return matmul(Tensor(np.ones((rows, 1))), x)


class ReduceKind(metaclass=StringHolderEnum):
    SUM = "sum"
    MEAN = "mean"


def reduce(x: Tensor, kind: str, axis: int | None = None) -> Tensor:
    """
    Sums or averages over one axis, or over everything when ``axis`` is None. Removing the last axis leaves shape [1].
    """
    if kind not in ReduceKind:
        raise ValueError(f"Unknown reduction {kind!r}")
    if axis is None:
        extent = x.size
        out = np.array([x.value.sum()])
        expand = lambda g: np.full(x.shape, g.reshape(-1)[0])  # noqa: E731
    else:
        axis = _check_axis(x, axis)
        extent = x.shape[axis]
        out = x.value.sum(axis=axis)
        kept_shape = x.shape[:axis] + (1,) + x.shape[axis + 1 :]
        expand = lambda g: np.broadcast_to(g.reshape(kept_shape), x.shape)  # noqa: E731

    if kind == "mean":
        out = out / extent
        return apply_op("mean", out, (x,), lambda g: (expand(g) / extent,))
    return apply_op("sum", out, (x,), lambda g: (np.array(expand(g)),))


def sum(x: Tensor, axis: int | None = None) -> Tensor:
    return reduce(x, "sum", axis)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    return reduce(x, "mean", axis)


def softmax(x: Tensor, axis: int) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    return apply_op("softmax", y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int) -> Tensor:
    axis = _check_axis(x, axis)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    p = np.exp(y)
    return apply_op("log_softmax", y, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalizes over the last axis, then applies ``gain`` and ``bias``.

    Rows with zero spread have a normalized part of exactly 0 (so the output is ``bias``), and pass no gradient
    back to ``x``.
    """
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"gain {gain.shape} and bias {bias.shape} must both be ({d},) for input {x.shape}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")

    rows = x.value.reshape(-1, d)
    flat_rows = np.ptp(rows, axis=1, keepdims=True) == 0
    mu = rows.mean(axis=1, keepdims=True)
    centered = np.where(flat_rows, 0.0, rows - mu)
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + eps)
    xhat = centered * inv_std
    gv, bv = gain.value, bias.value
    out = (xhat * gv + bv).reshape(x.shape)

    def _layer_norm_backward(g):
        g = g.reshape(-1, d)
        g_xhat = g * gv
        dx = inv_std * (
            g_xhat - g_xhat.mean(axis=1, keepdims=True) - xhat * (g_xhat * xhat).mean(axis=1, keepdims=True)
        )
        dx = np.where(flat_rows, 0.0, dx)
        return dx.reshape(x.shape), (g * xhat).sum(axis=0), g.sum(axis=0)

    return apply_op("layer_norm", out, (x, gain, bias), _layer_norm_backward)


def argmax(x: Tensor, axis: int = -1) -> np.ndarray:
    """Not differentiable. Ties go to the lowest index."""
    axis = _check_axis(x, axis)
    return np.argmax(x.value, axis=axis)


__all__ = [
    "ElementwiseKind",
    "ReduceKind",
    "elementwise",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "clip_max",
    "maximum",
    "minimum",
    "gelu",
    "exp",
    "log",
    "abs",
    "sigmoid",
    "neg",
    "square",
    "matmul",
    "transpose",
    "reshape",
    "slice_axis",
    "concat",
    "repeat_rows",
    "reduce",
    "sum",
    "mean",
    "softmax",
    "log_softmax",
    "layer_norm",
    "argmax",
]

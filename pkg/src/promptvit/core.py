# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
Dense float64 tensors with reverse-mode differentiation.

Every differentiable operation in promptvit goes through [promptvit.core.apply_op][], which computes the output
value eagerly and, when any input requires a gradient, appends a [promptvit.core.Node][] to the current
[promptvit.core.ComputationGraph][]. [promptvit.core.backward][] walks the recorded nodes in descending index
order, so each node is visited exactly once, after every node that consumes its output.
"""

import contextlib
import dataclasses
import itertools
import logging
import math
import threading
from contextvars import ContextVar
from typing import Callable, Iterator, Sequence

import numpy as np

from .types import Scalar, Shape


logger = logging.getLogger(__name__)


class ShapeMismatch(ValueError):
    pass


class InvalidAxis(ValueError):
    pass


class NotScalar(ValueError):
    pass


class DisconnectedLoss(ValueError):
    pass


BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]
"""Maps the gradient of a node's output to the gradients of its inputs (None where an input needs none)."""


@dataclasses.dataclass(eq=False)
class Node:
    index: int
    kind: str
    inputs: tuple["Tensor", ...]
    backward_fn: BackwardFn


class ComputationGraph:
    """
    An append-only tape of operation records. Inputs of node k always have index < k.

    Node indices come from one process-wide counter, so tensors produced under different graphs
    can still be combined and differentiated together.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def record(self, kind: str, inputs: Sequence["Tensor"], backward_fn: BackwardFn) -> Node:
        node = Node(next(_node_counter), kind, tuple(inputs), backward_fn)
        self.nodes.append(node)
        return node

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"ComputationGraph(nodes={len(self.nodes)})"


_thread_state = threading.local()
_node_counter = itertools.count()
_active_graph: ContextVar[ComputationGraph | None] = ContextVar("promptvit_graph", default=None)
_grad_enabled: ContextVar[bool] = ContextVar("promptvit_grad_enabled", default=True)


def current_graph() -> ComputationGraph:
    """The graph new nodes are appended to. Each thread starts with its own default graph."""
    graph = _active_graph.get()
    if graph is not None:
        return graph
    graph = getattr(_thread_state, "graph", None)
    if graph is None:
        graph = _thread_state.graph = ComputationGraph()
    return graph


@contextlib.contextmanager
def new_graph() -> Iterator[ComputationGraph]:
    """Records into a fresh graph for the duration of the block. Use one per training step."""
    graph = ComputationGraph()
    token = _active_graph.set(graph)
    try:
        yield graph
    finally:
        _active_graph.reset(token)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


class Tensor:
    """
    A shape-typed array of 64-bit floats with a gradient slot.

    Shapes are never empty and never contain a zero dimension: 0-d values are stored with shape (1,).
    A tensor with ``requires_grad=False`` never accumulates a gradient. Tensors produced by an operation carry
    the [promptvit.core.Node][] that made them; leaves (parameters, inputs) have ``node=None``.
    """

    __slots__ = ("value", "requires_grad", "grad", "node")
    # make numpy defer to our reflected operators, e.g. np.float64(2) * t
    __array_ufunc__ = None

    def __init__(self, value, requires_grad: bool = False, node: Node | None = None):
        value = np.ascontiguousarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1)
        if 0 in value.shape:
            raise ShapeMismatch(f"Tensor dimensions must be positive, got shape {value.shape}")
        self.value: np.ndarray = value
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node = node

    @property
    def shape(self) -> Shape:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        if self.size != 1:
            raise NotScalar(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return stop_gradient(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Identity semantics: tensors are used as dict keys in gradient maps.
    __hash__ = object.__hash__

    @property
    def T(self) -> "Tensor":
        from . import ops

        return ops.transpose(self)

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops

        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.add(ops.neg(self), other)

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.div(self, other)
        return ops.scale(self, 1.0 / other)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def new_tensor(shape: Sequence[int], values: Sequence[Scalar] | np.ndarray, requires_grad: bool = False) -> Tensor:
    """Builds a tensor from a shape and row-major values."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ShapeMismatch(f"All dimensions must be >= 1, got {shape}")
    flat = np.array(values, dtype=np.float64).reshape(-1)
    if flat.size != math.prod(shape):
        raise ShapeMismatch(f"{flat.size} values do not fill shape {shape} ({math.prod(shape)} elements)")
    return Tensor(flat.reshape(shape), requires_grad=requires_grad)


def tensor(values, requires_grad: bool = False) -> Tensor:
    """Builds a tensor from anything numpy can turn into an array."""
    return Tensor(np.array(values, dtype=np.float64), requires_grad=requires_grad)


def zeros(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), requires_grad=requires_grad)


def ones(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape)), requires_grad=requires_grad)


def as_tensor(x) -> Tensor:
    """Passes tensors through and wraps anything else as a constant."""
    if isinstance(x, Tensor):
        return x
    return tensor(x)


def stop_gradient(x: Tensor) -> Tensor:
    """A constant view of ``x``. Shares the value buffer; receives no gradient and passes none back."""
    return Tensor(x.value, requires_grad=False)


def apply_op(kind: str, value: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """
    Wraps the output of an operation. A node is recorded only when gradients are enabled and
    some input requires a gradient.
    """
    if is_grad_enabled() and any(t.requires_grad for t in inputs):
        node = current_graph().record(kind, inputs, backward_fn)
        return Tensor(value, requires_grad=True, node=node)
    return Tensor(value)


def backward(loss: Tensor, wrt: Sequence[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """
    Accumulates d(loss)/d(leaf) into ``leaf.grad`` for every leaf that requires a gradient.

    Repeated calls accumulate; call [promptvit.core.Tensor.zero_grad][] to reset. Leaves listed in ``wrt`` that
    the loss does not depend on get an all-zero gradient.

    Returns:
        the accumulated gradient of every leaf reached (or of exactly the ``wrt`` leaves, when given)
    """
    if loss.size != 1:
        raise NotScalar(f"backward needs a single-element loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise DisconnectedLoss("The loss is not connected to any tensor that requires a gradient")

    leaves: dict[Tensor, None] = {}

    def _accumulate_leaf(leaf: Tensor, g: np.ndarray):
        if g.shape != leaf.shape:
            raise ShapeMismatch(f"Gradient shape {g.shape} does not match leaf shape {leaf.shape}")
        if leaf.grad is None:
            leaf.grad = g.copy()
        else:
            leaf.grad = leaf.grad + g
        leaves[leaf] = None

    seed = np.ones(loss.shape)
    if loss.node is None:
        _accumulate_leaf(loss, seed)
    else:
        # reachable nodes, in descending index order
        pending: dict[int, Node] = {}
        stack = [loss.node]
        while stack:
            node = stack.pop()
            if id(node) in pending:
                continue
            pending[id(node)] = node
            stack.extend(t.node for t in node.inputs if t.node is not None)
        order = sorted(pending.values(), key=lambda n: n.index, reverse=True)

        node_grads: dict[int, np.ndarray] = {id(loss.node): seed}
        for node in order:
            g_out = node_grads.pop(id(node), None)
            if g_out is None:
                continue
            g_ins = node.backward_fn(g_out)
            for t, g in zip(node.inputs, g_ins):
                if g is None or not t.requires_grad:
                    continue
                if t.node is None:
                    _accumulate_leaf(t, g)
                else:
                    key = id(t.node)
                    node_grads[key] = node_grads[key] + g if key in node_grads else g

        logger.debug("backward visited %d nodes", len(order))

    if wrt is None:
        return {leaf: leaf.grad for leaf in leaves}  # type: ignore

    out = {}
    for leaf in wrt:
        if leaf.requires_grad and leaf.grad is None:
            leaf.grad = np.zeros(leaf.shape)
        out[leaf] = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
    return out


__all__ = [
    "Tensor",
    "Node",
    "ComputationGraph",
    "ShapeMismatch",
    "InvalidAxis",
    "NotScalar",
    "DisconnectedLoss",
    "new_tensor",
    "tensor",
    "zeros",
    "ones",
    "as_tensor",
    "stop_gradient",
    "apply_op",
    "backward",
    "current_graph",
    "new_graph",
    "no_grad",
    "is_grad_enabled",
]

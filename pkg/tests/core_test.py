# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import threading

import numpy as np
import pytest

from promptvit import ops
from promptvit.core import (
    DisconnectedLoss,
    NotScalar,
    ShapeMismatch,
    Tensor,
    backward,
    current_graph,
    new_graph,
    new_tensor,
    no_grad,
    stop_gradient,
    tensor,
)


def test_new_tensor_row_major():
    t = new_tensor((2, 3), [1, 2, 3, 4, 5, 6])
    assert t.shape == (2, 3)
    assert t.value[1, 0] == 4.0
    assert t.value.dtype == np.float64


def test_new_tensor_rejects_bad_shapes():
    with pytest.raises(ShapeMismatch):
        new_tensor((2, 2), [1.0, 2.0, 3.0])
    with pytest.raises(ShapeMismatch):
        new_tensor((0, 3), [])
    with pytest.raises(ShapeMismatch):
        new_tensor((), [1.0])


def test_scalars_are_stored_with_shape_one():
    t = tensor(3.0)
    assert t.shape == (1,)
    assert t.item() == 3.0


def test_item_needs_single_element():
    with pytest.raises(NotScalar):
        tensor([1.0, 2.0]).item()


def test_graph_records_only_when_needed():
    a = tensor([1.0, 2.0])
    b = tensor([3.0, 4.0], requires_grad=True)
    with new_graph() as graph:
        c = ops.add(a, a)
        assert len(graph) == 0
        assert not c.requires_grad
        d = ops.add(a, b)
        assert len(graph) == 1
        assert d.requires_grad


def test_inputs_precede_outputs():
    x = tensor([0.5, -1.0], requires_grad=True)
    with new_graph() as graph:
        y = ops.mul(ops.exp(x), ops.gelu(x))
        ops.sum(ops.square(y))
    for node in graph.nodes:
        for t in node.inputs:
            if t.node is not None:
                assert t.node.index < node.index


def test_diamond_gradient_visits_each_node_once():
    # y = x·x + x·x, dy/dx = 4x
    x = tensor([1.5, -2.0], requires_grad=True)
    with new_graph():
        sq = ops.mul(x, x)
        y = ops.sum(ops.add(sq, sq))
        grads = backward(y)
    assert np.array_equal(grads[x], 4 * x.value)


def test_backward_accumulates_until_zeroed():
    x = tensor([2.0], requires_grad=True)
    with new_graph():
        backward(ops.scale(x, 3.0))
        backward(ops.scale(x, 3.0))
    assert x.grad[0] == 6.0
    x.zero_grad()
    assert x.grad is None


def test_backward_on_leaf_loss():
    x = tensor([2.0], requires_grad=True)
    grads = backward(x)
    assert grads[x][0] == 1.0


def test_backward_wrt_disconnected_leaf_is_zero():
    x = tensor([1.0, 2.0], requires_grad=True)
    unused = tensor([[1.0, 2.0]], requires_grad=True)
    with new_graph():
        grads = backward(ops.sum(x), wrt=[x, unused])
    assert np.array_equal(grads[unused], np.zeros((1, 2)))


def test_backward_errors():
    x = tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(NotScalar):
        backward(ops.scale(x, 2.0))
    with pytest.raises(DisconnectedLoss):
        backward(ops.sum(tensor([1.0, 2.0])))


def test_no_grad_records_nothing():
    x = tensor([1.0], requires_grad=True)
    with new_graph() as graph:
        with no_grad():
            y = ops.exp(x)
        assert len(graph) == 0
        assert not y.requires_grad


def test_stop_gradient_shares_value_and_blocks_gradient():
    x = tensor([1.0, 2.0], requires_grad=True)
    y = stop_gradient(x)
    assert y.value is x.value
    with new_graph():
        grads = backward(ops.sum(ops.mul(x, y)), wrt=[x])
    assert np.array_equal(grads[x], x.value)


def test_operator_sugar():
    a = tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    b = tensor([[0.5, 0.0], [0.0, 2.0]])
    with new_graph():
        out = (a @ b - a / 2.0 + 1.0) * 3.0
        assert np.allclose(out.value, (a.value @ b.value - a.value / 2 + 1) * 3)
        assert np.array_equal((-a).value, -a.value)
        assert a.T.shape == (2, 2)
        assert np.array_equal((2.0 - a).value, 2.0 - a.value)


def test_numpy_returns_copy():
    a = tensor([1.0])
    a.numpy()[0] = 5.0
    assert a.value[0] == 1.0


def test_graphs_are_thread_local():
    graphs = {}

    def work(name):
        graphs[name] = current_graph()

    threads = [threading.Thread(target=work, args=(i,)) for i in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert graphs[0] is not graphs[1]


def test_tensors_are_hashable_by_identity():
    a = Tensor(np.ones(2))
    b = Tensor(np.ones(2))
    assert len({a: 1, b: 2}) == 2

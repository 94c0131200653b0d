# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import jax

from .core import stop_gradient
from .util import is_tensor


def tree_map(fn, tree, *rest, is_leaf=None):
    """
    Version of [jax.tree_util.tree_map][] that automatically treats Tensors as leaves.
    """
    old_is_leaf = is_leaf
    if is_leaf is None:
        is_leaf = is_tensor
    else:
        is_leaf = lambda x: old_is_leaf(x) or is_tensor(x)

    return jax.tree.map(fn, tree, *rest, is_leaf=is_leaf)


def detach(tree):
    """A copy of ``tree`` with every Tensor leaf replaced by a constant view of itself."""
    return tree_map(lambda x: stop_gradient(x) if is_tensor(x) else x, tree)

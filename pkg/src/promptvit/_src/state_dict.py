# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


# torch-style "state dict" naming for Tensor trees, stored with safetensors
import json
from typing import Any, Sequence, TypeVar

import jax
import numpy as np
import safetensors
import safetensors.numpy
from jax.tree_util import DictKey, FlattenedIndexKey, GetAttrKey, SequenceKey
from jaxtyping import PyTree

from promptvit.core import ShapeMismatch, Tensor
from promptvit.util import is_tensor


StateDict = dict[str, np.ndarray]
T = TypeVar("T")


def with_prefix(prefix: str | None, leaf: str | None) -> str | None:
    """``prefix.leaf``, or whichever of the two is present."""
    if prefix is None or leaf is None:
        return leaf if prefix is None else prefix
    return f"{prefix}.{leaf}"


def _key_name(entry) -> str:
    if isinstance(entry, GetAttrKey):
        return entry.name
    if isinstance(entry, DictKey):
        return str(entry.key)
    if isinstance(entry, SequenceKey):
        return str(entry.idx)
    if isinstance(entry, FlattenedIndexKey):
        return str(entry.key)
    return str(entry).lstrip(".")


def format_path_for_state_dict(prefix: str | None, path: Sequence) -> str:
    """Dotted name of a pytree key path: attributes, dict keys and list indices all become ``.``-separated parts."""
    name = ".".join(_key_name(entry) for entry in path)
    return with_prefix(prefix, name or None) or ""


def named_tensors(tree: PyTree, prefix: str | None = None) -> list[tuple[str, Tensor]]:
    """All Tensor leaves of ``tree`` with their dotted state-dict names, in tree order."""
    leaves, _ = jax.tree_util.tree_flatten_with_path(tree, is_leaf=is_tensor)
    return [(format_path_for_state_dict(prefix, path), leaf) for path, leaf in leaves if isinstance(leaf, Tensor)]


def to_state_dict(tree: PyTree, prefix: str | None = None) -> StateDict:
    """Copies the value of every Tensor leaf into a flat name -> array dict."""
    state_dict: StateDict = {}
    for name, t in named_tensors(tree, prefix):
        if name in state_dict:
            raise ValueError(f"Duplicate state dict key {name}")
        state_dict[name] = t.value.copy()
    return state_dict


def from_state_dict(tree: T, state_dict: StateDict, prefix: str | None = None) -> T:
    """
    Returns a copy of ``tree`` whose Tensor leaves hold the values in ``state_dict``. Each new leaf keeps the
    ``requires_grad`` flag of the leaf it replaces.
    """
    leaves, treedef = jax.tree_util.tree_flatten_with_path(tree, is_leaf=is_tensor)
    new_leaves = []
    for path, leaf in leaves:
        if not isinstance(leaf, Tensor):
            new_leaves.append(leaf)
            continue
        name = format_path_for_state_dict(prefix, path)
        if name not in state_dict:
            raise ValueError(f"Missing key {name} in state dict")
        value = np.asarray(state_dict[name], dtype=np.float64)
        if value.shape != leaf.shape:
            raise ShapeMismatch(f"State dict entry {name} has shape {value.shape}, expected {leaf.shape}")
        new_leaves.append(Tensor(value.copy(), requires_grad=leaf.requires_grad))
    return jax.tree_util.tree_unflatten(treedef, new_leaves)


def save_state_dict(state_dict: StateDict, path, metadata: dict[str, Any] | None = None):
    """Writes ``state_dict`` as safetensors. Metadata values that are not strings are stored as JSON."""
    arrays = {k: np.ascontiguousarray(v) for k, v in state_dict.items() if v is not None}
    header = {k: v if isinstance(v, str) else json.dumps(v) for k, v in (metadata or {}).items()}
    safetensors.numpy.save_file(arrays, str(path), metadata=header)


def load_state_dict(path) -> StateDict:
    return safetensors.numpy.load_file(str(path))


def load_metadata(path) -> dict[str, str]:
    """The raw string metadata stored in a safetensors header."""
    with safetensors.safe_open(str(path), framework="numpy") as f:
        return dict(f.metadata() or {})

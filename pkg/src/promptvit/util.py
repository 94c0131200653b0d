# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


import csv
import dataclasses
import hashlib
import json
import os
from typing import Any, Sequence, TypeVar


T = TypeVar("T")


class InvalidConfig(ValueError):
    """Raised when a configuration section violates one of its invariants."""


def is_tensor(leaf):
    """is_leaf predicate that stops tree traversal at engine tensors."""
    from .core import Tensor

    return isinstance(leaf, Tensor)


def dedupe(xs: Sequence[T]) -> list[T]:
    """Drops repeated elements, keeping the first occurrence of each."""
    seen: set = set()
    out = []
    for x in xs:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def canonical_json(obj: Any) -> str:
    """Sorted-key, separator-stable JSON of a (possibly nested) dataclass."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def digest_of(obj: Any) -> str:
    """SHA-256 hex digest of [promptvit.util.canonical_json][]."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def format_csv_cell(value) -> str:
    """Floats as repr, so they read back exactly; None as an empty cell."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Sequence[dict], columns: Sequence[str], path):
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_csv_cell(row.get(c)) for c in columns])


class StringHolderEnum(type):
    """A namespace of plain string constants. Iterating the class yields the values; ``in`` tests membership."""

    def __new__(mcs, name, bases, members):
        new_cls = super().__new__(mcs, name, bases, members)
        new_cls.members = [v for k, v in members.items() if not k.startswith("__") and not callable(v)]
        return new_cls

    def __iter__(cls):
        yield from cls.members

    def __contains__(cls, item):
        return item in cls.members


__all__ = [
    "InvalidConfig",
    "is_tensor",
    "dedupe",
    "canonical_json",
    "digest_of",
    "format_csv_cell",
    "write_csv",
    "StringHolderEnum",
]

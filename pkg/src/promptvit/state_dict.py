# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


from ._src.state_dict import (
    StateDict,
    format_path_for_state_dict,
    from_state_dict,
    load_metadata,
    load_state_dict,
    named_tensors,
    save_state_dict,
    to_state_dict,
)


__all__ = [
    "StateDict",
    "format_path_for_state_dict",
    "from_state_dict",
    "load_metadata",
    "load_state_dict",
    "named_tensors",
    "save_state_dict",
    "to_state_dict",
]

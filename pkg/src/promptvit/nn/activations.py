# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


from .. import ops
from ..core import Tensor


def gelu(a: Tensor) -> Tensor:
    return ops.gelu(a)


ACTIVATIONS = {"gelu": gelu}

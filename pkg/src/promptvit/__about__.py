# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


__version__ = "0.1"

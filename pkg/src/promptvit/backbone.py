# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
The video transformer backbone: patch embedding, the [CLS | patches | prompts] token sequence, and a stack of
pre-norm attention blocks with full joint space-time attention.
"""

import dataclasses
from typing import Sequence

import equinox as eqx
import jax
import numpy as np
from jax.random import PRNGKey
from jaxtyping import Float

from . import ops
from . import random as prandom
from .core import ShapeMismatch, Tensor, tensor
from .nn import MLP, LayerNorm, Linear, MultiHeadAttention
from .tree_util import detach
from .types import SYNTHETIC_TASKS
from .util import InvalidConfig, dedupe


@dataclasses.dataclass(frozen=True)
class BackboneConfig:
    frames: int = 4
    height: int = 32
    width: int = 32
    patch_h: int = 8
    patch_w: int = 8
    embed_dim: int = 64
    layers: int = 8
    heads: int = 4
    prompt_count: int = 5
    # 1-based block indices whose patch rows feed the dense heads
    tap_layers: tuple[int, ...] = (1, 6, 8)
    downstream_classes: int = 8
    channels: int = 3
    mlp_ratio: int = 4
    layer_norm_eps: float = 1e-5
    init_std: float = 0.02
    # about the norm of a patch embedding at init
    position_init_std: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "tap_layers", tuple(int(t) for t in self.tap_layers))
        for name in ("frames", "height", "width", "patch_h", "patch_w", "embed_dim", "layers", "heads", "channels"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.height % self.patch_h != 0 or self.width % self.patch_w != 0:
            raise InvalidConfig(
                f"Frame size {self.height}x{self.width} is not divisible by patch size {self.patch_h}x{self.patch_w}"
            )
        if self.embed_dim % self.heads != 0:
            raise InvalidConfig(f"embed_dim {self.embed_dim} is not divisible by heads {self.heads}")
        if self.prompt_count < 0:
            raise InvalidConfig(f"prompt_count must be >= 0, got {self.prompt_count}")
        if self.downstream_classes < 1 or self.mlp_ratio < 1:
            raise InvalidConfig("downstream_classes and mlp_ratio must be >= 1")
        taps = self.tap_layers
        if not taps or any(t < 1 or t > self.layers for t in taps) or any(a >= b for a, b in zip(taps, taps[1:])):
            raise InvalidConfig(f"tap_layers must be strictly increasing within [1, {self.layers}], got {taps}")
        if not self.layer_norm_eps > 0 or not self.init_std > 0 or not self.position_init_std > 0:
            raise InvalidConfig("layer_norm_eps, init_std and position_init_std must be positive")

    @property
    def grid_h(self) -> int:
        return self.height // self.patch_h

    @property
    def grid_w(self) -> int:
        return self.width // self.patch_w

    @property
    def num_patches(self) -> int:
        return self.frames * self.grid_h * self.grid_w

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_h * self.patch_w

    @property
    def sequence_length(self) -> int:
        return 1 + self.num_patches + self.prompt_count


def patchify(video: Float[np.ndarray, "T C H W"], config: BackboneConfig) -> Float[np.ndarray, "N P"]:  # noqa: F722
    """
    Cuts a video into non-overlapping per-frame patches, flattened channel-major. Patches are ordered frame-major,
    then row-major within a frame.
    """
    expected = (config.frames, config.channels, config.height, config.width)
    video = np.asarray(video, dtype=np.float64)
    if video.shape != expected:
        raise ShapeMismatch(f"Expected a video of shape {expected}, got {video.shape}")
    T, C = config.frames, config.channels
    gh, gw, h, w = config.grid_h, config.grid_w, config.patch_h, config.patch_w
    patches = video.reshape(T, C, gh, h, gw, w).transpose(0, 2, 4, 1, 3, 5)
    return patches.reshape(T * gh * gw, C * h * w)


class PatchEmbed(eqx.Module):
    projection: Tensor  # E: [C*h*w, d]
    position: Tensor  # PE: [N, d]
    config: BackboneConfig = eqx.field(static=True)

    @staticmethod
    def init(config: BackboneConfig, *, key: PRNGKey) -> "PatchEmbed":
        k_e, k_pe = jax.random.split(key)
        d = config.embed_dim
        return PatchEmbed(
            prandom.normal(k_e, (config.patch_dim, d), config.init_std),
            prandom.normal(k_pe, (config.num_patches, d), config.position_init_std),
            config,
        )

    def __call__(self, video: Float[np.ndarray, "T C H W"]) -> Tensor:  # noqa: F722
        patches = tensor(patchify(video, self.config))
        return ops.add(ops.matmul(patches, self.projection), self.position)


class TaskPrompts(eqx.Module):
    """
    Learned prompt rows, one slot per prompt. ``routing`` assigns each supervised task a slot; several tasks may
    share one slot, and slots no task routes to are unsupervised.

    The prompt block of the token sequence lists the routed slots in task order, then the unrouted slots in
    ascending order. Swapping two rows of ``values`` together with their routing therefore leaves the token
    sequence unchanged.

    When ``projection`` is set the rows have a private width and are mapped into the token width by it.
    """

    values: Tensor  # [slots, prompt_dim]
    projection: Linear | None
    routing: tuple[tuple[str, int], ...] = eqx.field(static=True)

    @staticmethod
    def init(
        count: int,
        embed_dim: int,
        tasks: Sequence[str],
        *,
        key: PRNGKey,
        init_std: float = 0.02,
        prompt_dim: int | None = None,
        shared: bool = False,
    ) -> "TaskPrompts":
        """
        Args:
            count: number of prompt slots
            tasks: supervised tasks, in the fixed task order
            shared: route every task to slot 0
            prompt_dim: private prompt width; adds a bias-free projection to ``embed_dim``
        """
        if count < 1:
            raise InvalidConfig(f"TaskPrompts needs at least one slot, got {count}")
        if not shared and len(tasks) > count:
            raise InvalidConfig(f"{len(tasks)} tasks need at least as many prompts, got {count}")
        k_values, k_proj = jax.random.split(key)
        width = embed_dim if prompt_dim is None else prompt_dim
        values = prandom.normal(k_values, (count, width), init_std)
        projection = None
        if prompt_dim is not None:
            projection = Linear.init(prompt_dim, embed_dim, key=k_proj, use_bias=False, init_std=init_std)
        routing = tuple((task, 0 if shared else i) for i, task in enumerate(tasks))
        return TaskPrompts(values, projection, routing)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(task for task, _ in self.routing)

    @property
    def order(self) -> tuple[int, ...]:
        routed = dedupe([slot for _, slot in self.routing])
        return tuple(routed + [s for s in range(self.count) if s not in routed])

    def slot_of(self, task: str) -> int:
        for t, slot in self.routing:
            if t == task:
                return slot
        raise KeyError(task)

    def position_of(self, task: str) -> int:
        """Row of ``task``'s prompt within the prompt block."""
        return self.order.index(self.slot_of(task))

    def rows(self) -> Tensor:
        """The prompt block, [count, d], in sequence order."""
        order = self.order
        if order == tuple(range(self.count)):
            rows = self.values
        else:
            rows = ops.concat([ops.slice_axis(self.values, 0, s, s + 1) for s in order], axis=0)
        if self.projection is not None:
            rows = self.projection(rows)
        return rows

    def swap(self, task_a: str, task_b: str) -> "TaskPrompts":
        """Exchanges the prompt rows of two tasks along with their routing."""
        a, b = self.slot_of(task_a), self.slot_of(task_b)
        values = self.values.numpy()
        values[[a, b]] = values[[b, a]]
        swapped = {task_a: b, task_b: a}
        routing = tuple((t, swapped.get(t, s)) for t, s in self.routing)
        return TaskPrompts(Tensor(values, requires_grad=self.values.requires_grad), self.projection, routing)


@dataclasses.dataclass(frozen=True)
class TokenSequence:
    """Rows ``[CLS | patches | prompts]``. Ranges are half-open row index ranges."""

    rows: Tensor
    num_patches: int
    num_prompts: int

    def __post_init__(self):
        expected = 1 + self.num_patches + self.num_prompts
        if self.rows.ndim != 2 or self.rows.shape[0] != expected:
            raise ShapeMismatch(f"Token sequence needs {expected} rows, got {self.rows.shape}")

    @property
    def cls_index(self) -> int:
        return 0

    @property
    def patch_range(self) -> range:
        return range(1, 1 + self.num_patches)

    @property
    def prompt_range(self) -> range:
        return range(1 + self.num_patches, 1 + self.num_patches + self.num_prompts)

    def __len__(self):
        return self.rows.shape[0]


class TransformerBlock(eqx.Module):
    """Pre-norm residual block: ``x + MHSA(LN(x))``, then ``+ FFN(LN(·))``."""

    norm1: LayerNorm
    attn: MultiHeadAttention
    norm2: LayerNorm
    mlp: MLP

    @staticmethod
    def init(config: BackboneConfig, *, key: PRNGKey) -> "TransformerBlock":
        k_attn, k_mlp = jax.random.split(key)
        d = config.embed_dim
        return TransformerBlock(
            LayerNorm.init(d, config.layer_norm_eps),
            MultiHeadAttention.init(d, config.heads, key=k_attn, init_std=config.init_std),
            LayerNorm.init(d, config.layer_norm_eps),
            MLP.init(d, d, d * config.mlp_ratio, 1, "gelu", key=k_mlp, init_std=config.init_std),
        )

    def __call__(self, x: Tensor) -> Tensor:
        x = ops.add(x, self.attn(self.norm1(x)))
        return ops.add(x, self.mlp(self.norm2(x)))


@dataclasses.dataclass(frozen=True)
class ForwardOutputs:
    f_cls: Tensor  # [1, d]
    f_prompts: Tensor | None  # [n, d], None when there are no prompts
    f_patch_final: Tensor  # [N, d]
    tapped_patches: dict[int, Tensor]  # tap layer -> [N, d]


class Backbone(eqx.Module):
    embed: PatchEmbed
    cls_token: Tensor  # [1, d]
    prompts: TaskPrompts | None
    blocks: tuple[TransformerBlock, ...]
    norm: LayerNorm
    config: BackboneConfig = eqx.field(static=True)

    @staticmethod
    def init(
        config: BackboneConfig,
        *,
        key: PRNGKey,
        tasks: Sequence[str] = SYNTHETIC_TASKS,
        prompt_dim: int | None = None,
        shared_prompt: bool = False,
    ) -> "Backbone":
        k_embed, k_cls, k_prompts, k_blocks = jax.random.split(key, 4)
        prompts = None
        if config.prompt_count > 0:
            prompts = TaskPrompts.init(
                config.prompt_count,
                config.embed_dim,
                tasks,
                key=k_prompts,
                init_std=config.init_std,
                prompt_dim=prompt_dim,
                shared=shared_prompt,
            )
        block_keys = jax.random.split(k_blocks, config.layers)
        return Backbone(
            PatchEmbed.init(config, key=k_embed),
            prandom.normal(k_cls, (1, config.embed_dim), config.init_std),
            prompts,
            tuple(TransformerBlock.init(config, key=k) for k in block_keys),
            LayerNorm.init(config.embed_dim, config.layer_norm_eps),
            config,
        )

    @property
    def num_prompts(self) -> int:
        return 0 if self.prompts is None else self.prompts.count

    def patch_embed(self, video: Float[np.ndarray, "T C H W"]) -> Tensor:  # noqa: F722
        return self.embed(video)

    def assemble_tokens(self, patches: Tensor, cls_token: Tensor | None = None) -> TokenSequence:
        N, d = self.config.num_patches, self.config.embed_dim
        if patches.shape != (N, d):
            raise ShapeMismatch(f"Expected patch tokens of shape {(N, d)}, got {patches.shape}")
        parts = [self.cls_token if cls_token is None else cls_token, patches]
        if self.prompts is not None:
            parts.append(self.prompts.rows())
        return TokenSequence(ops.concat(parts, axis=0), N, self.num_prompts)

    def __call__(
        self, video: Float[np.ndarray, "T C H W"], *, freeze_backbone: bool = False  # noqa: F722
    ) -> ForwardOutputs:
        """
        Runs the blocks over ``[CLS | patches | prompts]``. With ``freeze_backbone`` the embedder, CLS token, blocks
        and final norm are used as constants, so only the prompts (and whatever reads the outputs) get gradients.
        """
        embed, cls_token, blocks, norm = self.embed, self.cls_token, self.blocks, self.norm
        if freeze_backbone:
            embed, cls_token, blocks, norm = detach((embed, cls_token, blocks, norm))

        tokens = self.assemble_tokens(embed(video), cls_token)
        N = self.config.num_patches
        taps = set(self.config.tap_layers)
        x = tokens.rows
        tapped: dict[int, Tensor] = {}
        for i, block in enumerate(blocks, start=1):
            x = block(x)
            if i in taps:
                tapped[i] = ops.slice_axis(x, 0, 1, 1 + N)

        x = norm(x)
        f_prompts = None
        if self.num_prompts > 0:
            f_prompts = ops.slice_axis(x, 0, 1 + N, 1 + N + self.num_prompts)
        return ForwardOutputs(
            f_cls=ops.slice_axis(x, 0, 0, 1),
            f_prompts=f_prompts,
            f_patch_final=ops.slice_axis(x, 0, 1, 1 + N),
            tapped_patches=tapped,
        )

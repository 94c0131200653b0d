# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
Run configuration. A YAML file has up to five sections (``backbone``, ``losses``, ``data``, ``trainer``,
``variant``); keys left out take their defaults and unknown keys are rejected.

```yaml
backbone:
  layers: 8
  tap_layers: [1, 6, 8]
losses:
  pose: 3.0
data:
  real_train: 1000
  task_pool: [[depth, normal, segm], [pose, boxes]]
trainer:
  batch_size: 8
  synth_ratio: "1"
variant:
  kind: pvit
```
"""

import dataclasses
import os
from fractions import Fraction
from typing import Any, Mapping

import yaml

from .backbone import BackboneConfig
from .losses import LossWeights
from .scenegen import DataConfig, SceneConfig
from .trainer import TrainConfig
from .util import InvalidConfig, digest_of
from .variants import VariantSpec


@dataclasses.dataclass(frozen=True)
class RunConfig:
    backbone: BackboneConfig = BackboneConfig()
    losses: LossWeights = LossWeights()
    data: DataConfig = DataConfig()
    trainer: TrainConfig = TrainConfig()
    variant: VariantSpec = VariantSpec()

    @property
    def scene(self) -> SceneConfig:
        return SceneConfig.from_backbone(self.backbone)

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, trainer=dataclasses.replace(self.trainer, seed=seed))

    def with_variant(self, kind: str, prompt_count: int | None = None) -> "RunConfig":
        return dataclasses.replace(self, variant=VariantSpec(kind, prompt_count))


_SECTIONS: dict[str, type] = {
    "backbone": BackboneConfig,
    "losses": LossWeights,
    "data": DataConfig,
    "trainer": TrainConfig,
    "variant": VariantSpec,
}


def _build_section(name: str, cls: type, values: Mapping[str, Any] | None):
    if values is None:
        return cls()
    if not isinstance(values, Mapping):
        raise InvalidConfig(f"Section {name} must be a mapping, got {type(values).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise InvalidConfig(f"Unknown keys in section {name}: {sorted(unknown)}")
    try:
        return cls(**values)
    except TypeError as e:
        raise InvalidConfig(f"Bad value in section {name}: {e}") from e


def config_from_dict(data: Mapping[str, Any] | None) -> RunConfig:
    data = data or {}
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise InvalidConfig(f"Unknown config sections: {sorted(unknown)}")
    return RunConfig(**{name: _build_section(name, cls, data.get(name)) for name, cls in _SECTIONS.items()})


def load_config(path: str | os.PathLike | None) -> RunConfig:
    """Reads a YAML run configuration; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    with open(path) as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise InvalidConfig(f"{path} is not valid YAML: {e}") from e
    if data is not None and not isinstance(data, Mapping):
        raise InvalidConfig(f"{path} must hold a mapping of sections")
    return config_from_dict(data)


def _plain(value):
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    return {name: _plain(dataclasses.asdict(getattr(config, name))) for name in _SECTIONS}


def dump_config(config: RunConfig, path: str | os.PathLike):
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=True)


def config_digest(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON of the resolved configuration."""
    return digest_of(config)


__all__ = ["RunConfig", "config_from_dict", "load_config", "config_to_dict", "dump_config", "config_digest"]

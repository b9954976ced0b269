"""YAML experiment configuration with a versioned, closed schema.

Unknown keys are errors rather than warnings: a typo in an ablation
sweep would otherwise silently fall back to a default and burn hours of
compute on the wrong experiment.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .ablation import ABLATION_KINDS, DEFAULT_GRIDS, AblationPlan
from .corpus.types import SyntheticSpec
from .matchmismatch import TrainConfig

CONFIG_VERSION = 1

DEFAULT_SEEDS = (0, 1, 2)


def _load_mapping(path) -> dict:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as err:
        raise ValueError(f"{path}: not valid YAML ({err})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a key/value mapping at the top level")
    version = data.pop("config_version", None)
    if version != CONFIG_VERSION:
        raise ValueError(f"{path}: config_version {version!r} is not {CONFIG_VERSION}")
    return data


def _reject_unknown(path, data: dict, allowed, what: str):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ValueError(
            f"{path}: unknown {what} key(s): {', '.join(unknown)}; "
            f"allowed: {', '.join(sorted(allowed))}"
        )


def _train_config(path, data: dict) -> TrainConfig:
    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    _reject_unknown(path, data, fields, "training")
    if isinstance(data.get("boundary_param"), list):
        data["boundary_param"] = tuple(data["boundary_param"])
    return TrainConfig(**data).validate()


def load_train_config(path) -> TrainConfig:
    return _train_config(path, _load_mapping(path))


def load_ablation_plan(path) -> AblationPlan:
    data = _load_mapping(path)
    _reject_unknown(path, data, ("kind", "grid", "seeds", "train"), "ablation")
    kind = data.get("kind")
    if kind not in ABLATION_KINDS:
        raise ValueError(f"{path}: kind must be one of {ABLATION_KINDS}, got {kind!r}")
    grid = data.get("grid")
    if grid is None:
        grid = DEFAULT_GRIDS[kind]
    elif isinstance(grid, list):
        grid = tuple(tuple(v) if isinstance(v, list) else v for v in grid)
    else:
        raise ValueError(f"{path}: grid must be a list")
    seeds = data.get("seeds", list(DEFAULT_SEEDS))
    if not isinstance(seeds, list):
        raise ValueError(f"{path}: seeds must be a list")
    train = data.get("train", {})
    if not isinstance(train, dict):
        raise ValueError(f"{path}: train must be a key/value mapping")
    base = _train_config(path, dict(train))
    return AblationPlan(kind=kind, grid=grid, seeds=tuple(seeds),
                        base_config=base).validate()


def load_synthetic_spec(path) -> SyntheticSpec:
    data = _load_mapping(path)
    fields = {f.name for f in dataclasses.fields(SyntheticSpec)}
    _reject_unknown(path, data, fields, "synthetic corpus")
    for name in ("words_per_sentence", "word_len_frames"):
        if isinstance(data.get(name), list):
            data[name] = tuple(data[name])
    return SyntheticSpec(**data).validate()

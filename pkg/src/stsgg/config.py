"""Flat ``key = value`` run configuration.

Every key is also a command-line flag (``d_model`` -> ``--d-model``). Unknown
keys are rejected with the offending line number.
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass, fields
from pathlib import Path
from typing import get_type_hints

from .data.synthetic import SyntheticConfig
from .geometry import LossWeights
from .model import ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # data
    seed: int = 0
    frames: int = 30
    frames_per_video: int = 5
    grid_size: int = 8
    num_objects: int = 6
    attention_predicates: int = 3
    spatial_predicates: int = 4
    contacting_predicates: int = 5
    zipf_exponent: float = 1.0
    cue_noise: float = 0.2
    # model
    num_queries: int = 8
    d_model: int = 32
    d_embed: int = 32
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 0
    n_ref: int = 1
    content_source: str = "vlm"
    predicate_memory: str = "bank"
    anchor_table: str = ""
    embedding_table: str = ""
    # loss
    alpha_sub: float = 1.0
    alpha_obj: float = 1.0
    alpha_pred: float = 1.0
    beta: float = 1.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    no_object_weight: float = 0.1
    # optimizer
    steps: int = 2000
    lr: float = 1e-3
    weight_decay: float = 0.0
    grad_clip: float = 0.0
    max_cues: int = 0
    # evaluation
    modes: tuple[str, ...] = ("predcls", "sgcls", "sgdet")
    constraints: tuple[str, ...] = ("with", "no")
    ks: tuple[int, ...] = (10, 20, 50)
    iou_threshold: float = 0.5
    constraint_scope: str = "pair"

    def __post_init__(self):
        # build the component configs once so invalid values surface here
        try:
            self.synthetic()
            self.model()
            self.loss()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.steps < 0 or self.lr <= 0:
            raise ConfigError("steps must be >= 0 and lr > 0")
        if any(k <= 0 for k in self.ks):
            raise ConfigError("every K must be positive")

    @property
    def group_sizes(self) -> tuple[int, int, int]:
        return (self.attention_predicates, self.spatial_predicates, self.contacting_predicates)

    def synthetic(self) -> SyntheticConfig:
        return SyntheticConfig(self.seed, self.frames, self.frames_per_video, self.grid_size, self.num_objects,
                               *self.group_sizes, self.zipf_exponent, self.cue_noise)

    def model(self, num_objects: int | None = None, group_sizes=None, grid_size: int | None = None) -> ModelConfig:
        return ModelConfig(self.num_queries, self.d_model, self.d_embed, self.layers, self.heads, self.ffn_dim,
                           self.n_ref, num_objects or self.num_objects, tuple(group_sizes or self.group_sizes),
                           grid_size or self.grid_size, self.content_source, self.predicate_memory)

    def loss(self) -> LossWeights:
        return LossWeights(self.alpha_sub, self.alpha_obj, self.alpha_pred, self.beta, self.lambda_l1,
                           self.lambda_giou, self.focal_gamma, self.focal_alpha, self.no_object_weight)

    def train(self) -> TrainConfig:
        return TrainConfig(self.steps, self.lr, self.weight_decay, self.grad_clip, self.seed, self.max_cues)

    def to_text(self) -> str:
        lines = [f"{f.name} = {_format(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> RunConfig:
        unknown = set(changes) - KEYS
        if unknown:
            raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return RunConfig(**values)


KEYS = {f.name for f in fields(RunConfig)}
_TYPES = get_type_hints(RunConfig)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def parse_value(key: str, text: str):
    typ = _TYPES[key]
    text = text.strip()
    try:
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        if typ is str:
            return text
        item = typ.__args__[0]
        parts = [p.strip() for p in text.split(",") if p.strip()]
        return tuple(item(p) for p in parts)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {getattr(typ, '__name__', typ)}") from None


def parse_config(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    values = {} if path is None else parse_config(Path(path).read_text(encoding="utf-8"), str(path))
    values.update(overrides or {})
    unknown = set(values) - KEYS
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    return RunConfig(**values)


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for f in fields(RunConfig):
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", default=None, metavar="VALUE")


def flag_overrides(ns: argparse.Namespace) -> dict:
    out = {}
    for key in sorted(KEYS):
        value = getattr(ns, f"cfg_{key}", None)
        if value is not None:
            out[key] = parse_value(key, value)
    return out

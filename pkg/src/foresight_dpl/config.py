"""Run configuration: one JSON document with sections model, foresight,
training, env and eval, validated against the component dataclasses."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .control import VARIANTS
from .door_env import EnvConfig
from .foresight import ForesightConfig
from .trainer import TrainConfig

SECTIONS = ("model", "foresight", "training", "env", "eval")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    obs_dim: int = 7
    hidden_dim: int = 32

    def __post_init__(self):
        if self.obs_dim < 1 or self.hidden_dim < 1:
            raise ValueError("obs_dim and hidden_dim must be >= 1")


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 20
    seeds: tuple = (0, 1, 2)
    variants: tuple = VARIANTS

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not self.variants:
            raise ValueError(f"variants must be a non-empty subset of {VARIANTS}")


SECTION_TYPES = {
    "model": ModelConfig,
    "foresight": ForesightConfig,
    "training": TrainConfig,
    "env": EnvConfig,
    "eval": EvalConfig,
}


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    foresight: ForesightConfig = field(default_factory=ForesightConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _coerce(section: str, key: str, value, hint):
    where = f"{section}.{key}"
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
        return value
    if hint is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list, got {value!r}")
        return tuple(value)
    raise ConfigError(f"{where}: unsupported field type {hint!r}")


def _build_section(name: str, values: dict):
    cls = SECTION_TYPES[name]
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be an object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {', '.join(unknown)}")
    kwargs = {k: _coerce(name, k, v, hints[k]) for k, v in values.items()}
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid section {name!r}: {e}") from None


def from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    cfg = RunConfig(**{name: _build_section(name, doc.get(name, {})) for name in SECTIONS})
    if cfg.model.obs_dim != 7:
        raise ConfigError("model.obs_dim must be 7 for the door environment")
    return cfg


def parse_override(text: str) -> tuple[str, str, object]:
    """'section.key=value' -> (section, key, value); value is JSON when it parses."""
    lhs, sep, raw = text.partition("=")
    section, dot, key = lhs.strip().partition(".")
    if not sep or not dot or not section or not key:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return section, key, value


def load_config(path=None, overrides=(), base: dict | None = None) -> RunConfig:
    """Config from a JSON file (or the ``base`` document) plus overrides."""
    doc: dict = json.loads(json.dumps(base)) if base else {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    for text in overrides:
        section, key, value = parse_override(text)
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r} in override {text!r}")
        doc.setdefault(section, {})
        if not isinstance(doc[section], dict):
            raise ConfigError(f"section {section!r} must be an object")
        doc[section][key] = value
    return from_dict(doc)

"""Experiment configuration, loadable from JSON or TOML."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .gridscene import ROOM_TYPES, SceneGenConfig, VisibilityConfig
from .perception import NoiseConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSection:
    min_size: int = 10
    max_size: int = 12
    min_objects: int = 5
    max_objects: int = 8
    max_footprint: int = 2

    def gen_config(self, room_type: str) -> SceneGenConfig:
        return SceneGenConfig(room_type, self.min_size, self.max_size, self.min_objects, self.max_objects,
                              self.max_footprint)


@dataclass(frozen=True)
class SplitSection:
    room_types: tuple[str, ...] = ROOM_TYPES
    train_per_type: int = 6
    val_per_type: int = 1
    test_per_type: int = 2
    starts_per_scene: int = 10

    @property
    def per_type(self) -> int:
        return self.train_per_type + self.val_per_type + self.test_per_type


@dataclass(frozen=True)
class ScoringSection:
    lam: float = 0.1
    mode: str = "caption"
    gamma: float = 0.95


@dataclass(frozen=True)
class DemoSection:
    per_scene: int = 4
    t_max: int = 40
    target_per_demo: bool = True


@dataclass(frozen=True)
class ILSection:
    hidden: int = 64
    d_lang: int = 16
    lr: float = 5e-3
    epochs: int = 40
    batch_size: int = 8
    select_every: int = 5  # epochs between validation checks; 0 keeps the last params


@dataclass(frozen=True)
class RLSection:
    lr: float = 1e-3
    beta: float = 0.99
    rho: float = 0.01
    T: int = 40
    baseline_decay: float = 0.9
    batch_size: int = 8
    updates: int = 50


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    lexicon_seed: int = 0
    scene: SceneSection = field(default_factory=SceneSection)
    split: SplitSection = field(default_factory=SplitSection)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    visibility: VisibilityConfig = field(default_factory=VisibilityConfig)
    scoring: ScoringSection = field(default_factory=ScoringSection)
    demos: DemoSection = field(default_factory=DemoSection)
    il: ILSection = field(default_factory=ILSection)
    rl: RLSection = field(default_factory=RLSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)


def _section(cls, doc, where):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a table/object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, val in doc.items():
        if key not in known:
            raise ConfigError(f"{where}.{key}: unknown setting")
        default = getattr(cls(), key)
        if isinstance(default, tuple):
            val = tuple(val)
        elif isinstance(default, float) and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        kwargs[key] = val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SECTIONS = {f.name: f.default_factory for f in fields(ExperimentConfig) if f.default_factory is not None}


def config_from_dict(doc: dict) -> ExperimentConfig:
    kwargs = {}
    for key, val in doc.items():
        if key in ("seed", "lexicon_seed"):
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"{key}: expected integer")
            kwargs[key] = val
        elif key in _SECTIONS:
            kwargs[key] = _section(_SECTIONS[key], val, key)
        else:
            raise ConfigError(f"{key}: unknown section")
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        import tomli

        doc = tomli.loads(text)
    else:
        doc = json.loads(text)
    return config_from_dict(doc)

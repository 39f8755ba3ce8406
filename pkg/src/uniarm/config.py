"""Experiment configuration: one JSON document, unknown fields rejected."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .datasynth import SynthTaskConfig
from .decoding import DecodeConfig
from .model import AdapterSpec, ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Objective:
    name: str
    description: str
    tokens: tuple[int, ...]


@dataclass(frozen=True)
class TaskSection:
    objectives: tuple[Objective, ...]
    prompt_len: int = 8
    response_len: int = 12
    size: int = 2000
    focus_min: float = 0.5
    focus_max: float = 1.0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class AdapterSection:
    kind: str = "moslora"
    r1: int = 4
    r2: int = 4


@dataclass(frozen=True)
class SweepSection:
    scheme: str = "default"
    max_prompts: int = 100
    method: str = "uniarm"


@dataclass(frozen=True)
class PathsSection:
    data_dir: str = "data"
    run_dir: str = "runs/default"


@dataclass(frozen=True)
class ExperimentConfig:
    task: TaskSection
    seed: int = 0
    model: ModelConfig = ModelConfig()
    adapter: AdapterSection = AdapterSection()
    train: TrainConfig = TrainConfig()
    decode: DecodeConfig = DecodeConfig()
    sweep: SweepSection = SweepSection()
    paths: PathsSection = PathsSection()

    @property
    def k(self) -> int:
        return len(self.task.objectives)

    def adapter_spec(self) -> AdapterSpec:
        return AdapterSpec(kind=self.adapter.kind, r1=self.adapter.r1, r2=self.adapter.r2, k=self.k)

    def synth_task(self, seed: Optional[int] = None) -> SynthTaskConfig:
        return SynthTaskConfig(
            k=self.k,
            classes=tuple(o.tokens for o in self.task.objectives),
            vocab_size=self.model.vocab_size,
            prompt_len=self.task.prompt_len,
            response_len=self.task.response_len,
            size=self.task.size,
            focus_min=self.task.focus_min,
            focus_max=self.task.focus_max,
            seed=self.seed if seed is None else seed,
        )

    def descriptions(self) -> list[str]:
        return [o.description for o in self.task.objectives]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(
            self,
            seed=seed,
            train=dataclasses.replace(self.train, seed=seed),
            decode=dataclasses.replace(self.decode, seed=seed),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _convert(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path + '.' if path else ''}{unknown[0]}: unknown field")
    kwargs = {}
    for f in dataclasses.fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{sub}: missing required field")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def validate(cfg: ExperimentConfig) -> None:
    """Cross-section consistency checks, reported with field paths."""
    V = cfg.model.vocab_size
    if cfg.k < 1:
        raise ConfigError("task.objectives: need at least one objective")
    seen: dict[int, int] = {}
    for i, o in enumerate(cfg.task.objectives):
        p = f"task.objectives[{i}]"
        if not o.description.strip():
            raise ConfigError(f"{p}.description: must be nonempty")
        if not o.tokens:
            raise ConfigError(f"{p}.tokens: must be nonempty")
        for t in o.tokens:
            if not 0 < t < V:
                raise ConfigError(f"{p}.tokens: id {t} outside 1..{V - 1} (0 is the end token)")
            if t in seen:
                raise ConfigError(f"{p}.tokens: id {t} overlaps task.objectives[{seen[t]}].tokens")
            seen[t] = i
    if len(seen) >= V - 1:
        raise ConfigError("task.objectives: token classes leave no neutral tokens in the vocabulary")
    if cfg.task.prompt_len + cfg.task.response_len > cfg.model.max_seq_len:
        raise ConfigError("task.response_len: prompt_len + response_len exceeds model.max_seq_len")
    if cfg.task.prompt_len + cfg.decode.max_new_tokens > cfg.model.max_seq_len:
        raise ConfigError("decode.max_new_tokens: prompt_len + max_new_tokens exceeds model.max_seq_len")
    split = cfg.task.split
    if min(split) < 0 or abs(sum(split) - 1.0) > 1e-9:
        raise ConfigError("task.split: ratios must be nonnegative and sum to 1")
    d = cfg.model.d_model
    if max(cfg.adapter.r1, cfg.adapter.r2) > d:
        raise ConfigError(f"adapter.r1: adapter ranks may not exceed model.d_model={d}")
    if cfg.train.fixed_alpha is not None and len(cfg.train.fixed_alpha) != cfg.k:
        raise ConfigError(f"train.fixed_alpha: expected {cfg.k} entries")
    if cfg.k not in (2, 3) and cfg.train.fixed_alpha is None:
        raise ConfigError(f"task.objectives: preference sweeps support k in (2, 3), got {cfg.k}")
    if cfg.sweep.max_prompts <= 0:
        raise ConfigError("sweep.max_prompts: must be positive")
    try:
        AdapterSpec(kind=cfg.adapter.kind, r1=cfg.adapter.r1, r2=cfg.adapter.r2, k=cfg.k)
        cfg.synth_task()
    except ValueError as exc:
        raise ConfigError(f"task: {exc}") from exc


def from_dict(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "")
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data)


def _objectives(k: int, class_size: int = 8) -> list[dict]:
    texts = [
        ("useful", "the reply offers practical help and concrete next steps"),
        ("careful", "avoid risky or hurtful material and stay cautious"),
        ("playful", "keep the tone light cheerful and funny"),
    ]
    return [
        {"name": n, "description": d, "tokens": list(range(1 + i * class_size, 1 + (i + 1) * class_size))}
        for i, (n, d) in enumerate(texts[:k])
    ]


def default_config_dict(k: int = 2) -> dict:
    """Desk-scale defaults for the 2- or 3-objective synthetic task."""
    if k not in (2, 3):
        raise ValueError("defaults exist for k in (2, 3)")
    return {
        "seed": 0,
        "model": dataclasses.asdict(ModelConfig()),
        "adapter": {"kind": "moslora", "r1": 4, "r2": 4},
        "task": {
            "objectives": _objectives(k),
            "prompt_len": 8,
            "response_len": 12,
            "size": 2000,
            "focus_min": 0.5,
            "focus_max": 1.0,
            "split": [0.8, 0.1, 0.1],
        },
        "train": {
            "epochs": 2,
            "beta_r": 0.1,
            "learning_rate": 5e-3,
            "batch_size": 16,
            "lam": 0.5 if k == 2 else 0.2,
        },
        "decode": {"beta": 1.0 if k == 2 else 0.1, "max_new_tokens": 12, "mode": "sample", "temperature": 1.0},
        "sweep": {"scheme": "default", "max_prompts": 100, "method": "uniarm"},
        "paths": {"data_dir": "data", "run_dir": "runs/default"},
    }

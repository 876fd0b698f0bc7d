"""Run configuration: ``key = value`` files with [model], [train] and [data] sections."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ContractError
from .metrics import METRICS, parse_metrics
from .model import ModelConfig
from .trainer import TrainConfig

DATA_KEYS = {"all_references": True, "metrics": ",".join(METRICS)}
SECTIONS = ("model", "train", "data")
# fields the command line derives from --data rather than from the config file
_DERIVED = {"tasks"}


def _field_types(cls) -> dict[str, Any]:
    return {f.name: f.default for f in dataclasses.fields(cls) if f.name not in _DERIVED}


def coerce(value: str, default: Any, key: str):
    """Parse a string according to the type of the field's default."""
    value = value.strip()
    try:
        if isinstance(default, bool):
            lowered = value.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if key == "clip_norm" and value.lower() in ("none", "off"):
            return None
        if isinstance(default, float) or key == "clip_norm":
            return float(value)
        if isinstance(default, tuple):
            return tuple(v.strip() for v in value.split(",") if v.strip())
    except ValueError:
        raise ContractError(f"bad value for {key}: {value!r}") from None
    return value


@dataclass
class RunConfig:
    model: dict[str, Any] = field(default_factory=dict)
    train: dict[str, Any] = field(default_factory=dict)
    data: dict[str, Any] = field(default_factory=dict)

    def set(self, section: str, key: str, raw: str) -> None:
        known = self.known(section)
        if key not in known:
            raise ContractError(f"unknown key {key!r} in section [{section}]; known keys: {', '.join(sorted(known))}")
        getattr(self, section)[key] = coerce(raw, known[key], key) if isinstance(raw, str) else raw

    @staticmethod
    def known(section: str) -> dict[str, Any]:
        if section == "model":
            return _field_types(ModelConfig)
        if section == "train":
            return _field_types(TrainConfig)
        if section == "data":
            return dict(DATA_KEYS)
        raise ContractError(f"unknown section [{section}]; expected one of {SECTIONS}")

    def model_config(self, tasks: tuple[str, ...]) -> ModelConfig:
        return ModelConfig(tasks=tasks, **self.model)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    @property
    def metrics(self) -> tuple[str, ...]:
        return parse_metrics(self.data.get("metrics", DATA_KEYS["metrics"]))

    @property
    def all_references(self) -> bool:
        return bool(self.data.get("all_references", True))

    def to_dict(self) -> dict:
        return {"model": dict(self.model), "train": dict(self.train), "data": dict(self.data)}


def load_run_config(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ContractError(f"{path}: {exc}") from exc
    config = RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ContractError(f"{path}: unknown section [{section}]; expected one of {SECTIONS}")
        for key, value in parser.items(section):
            config.set(section, key, value)
    return config

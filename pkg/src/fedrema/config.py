"""Experiment configuration: defaults, INI-style file parsing with
strict key checking, validation, and round-trip serialization."""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass

from fedrema.errors import ConfigurationError

# section -> {key: type}; booleans parsed via configparser semantics
_SCHEMA = {
    "experiment": {
        "strategy": str,
        "clients": int,
        "rounds": int,
        "local_epochs": int,
        "batch_size": int,
        "learning_rate": float,
        "seed": int,
        "out_dir": str,
        "parallel": bool,
    },
    "data": {
        "source": str,
        "num_classes": int,
        "samples_per_client": int,
        "iid_fraction": float,
        "num_groups": int,
        "dominant_per_group": int,
        "input_dim": int,
        "class_separation": float,
        "pool_per_class": int,
        "images_path": str,
        "labels_path": str,
        "global_without_replacement": bool,
    },
    "model": {
        "hidden_dim": int,
        "feature_dim": int,
    },
    "fedrema": {
        "delta": float,
        "temperature": float,
        "n_probes": int,
        "paper_literal_mds": bool,
        "always_probe": bool,
    },
}

_FIELD_SECTION = {key: sec for sec, keys in _SCHEMA.items() for key in keys}


@dataclass
class ExperimentConfig:
    # [experiment]
    strategy: str = "fedrema"
    clients: int = 10
    rounds: int = 100
    local_epochs: int = 5
    batch_size: int = 100
    learning_rate: float = 0.01
    seed: int = 0
    out_dir: str = ""
    parallel: bool = False
    # [data]
    source: str = "synthetic"
    num_classes: int = 10
    samples_per_client: int = 600
    iid_fraction: float = 0.2
    num_groups: int = 5
    dominant_per_group: int = 3
    input_dim: int = 64
    class_separation: float = 1.5
    pool_per_class: int = 2000
    images_path: str = ""
    labels_path: str = ""
    global_without_replacement: bool = False
    # [model]
    hidden_dim: int = 64
    feature_dim: int = 32
    # [fedrema]
    delta: float = 0.5
    temperature: float = 0.5
    n_probes: int = 1
    paper_literal_mds: bool = False
    always_probe: bool = False

    def __post_init__(self):
        if not self.out_dir:
            self.out_dir = os.environ.get("FEDREMA_OUT_DIR", "runs")

    def validate(self) -> "ExperimentConfig":
        if self.strategy not in ("local", "fedavg", "fedper", "fedrema"):
            raise ConfigurationError(f"strategy: unknown value {self.strategy!r}")
        if not (0.0 <= self.iid_fraction <= 1.0):
            raise ConfigurationError(
                f"iid_fraction: must be in [0,1], got {self.iid_fraction}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigurationError(f"delta: must be in (0,1), got {self.delta}")
        if self.temperature <= 0:
            raise ConfigurationError(
                f"temperature: must be > 0, got {self.temperature}")
        for name in ("clients", "rounds", "local_epochs", "batch_size",
                     "samples_per_client", "num_groups", "dominant_per_group",
                     "input_dim", "hidden_dim", "feature_dim", "n_probes",
                     "num_classes", "pool_per_class"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name}: must be positive")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate: must be > 0")
        if self.source not in ("synthetic", "idx"):
            raise ConfigurationError(f"source: unknown value {self.source!r}")
        if self.source == "idx" and not (self.images_path and self.labels_path):
            raise ConfigurationError("source=idx requires images_path and labels_path")
        return self


def load_config(path: str) -> ExperimentConfig:
    """Parse an INI config; unknown sections or keys are rejected and
    missing keys fall back to the documented defaults."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigurationError(f"{path}: {e}") from e

    kwargs = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"{path}: unknown key {key!r} in [{section}]")
            typ = _SCHEMA[section][key]
            try:
                if typ is bool:
                    kwargs[key] = parser.getboolean(section, key)
                else:
                    kwargs[key] = typ(raw)
            except ValueError as e:
                raise ConfigurationError(
                    f"{path}: bad value for {key!r} in [{section}]: {raw!r}") from e
    return ExperimentConfig(**kwargs).validate()


def save_config(config: ExperimentConfig, path: str) -> None:
    parser = configparser.ConfigParser()
    for section, keys in _SCHEMA.items():
        parser[section] = {}
        for key in keys:
            value = getattr(config, key)
            parser[section][key] = str(value).lower() if isinstance(value, bool) else str(value)
    with open(path, "w") as f:
        parser.write(f)


def apply_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """CLI-flag layer: non-None overrides win over file values."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    for k in updates:
        if k not in _FIELD_SECTION:
            raise ConfigurationError(f"unknown config field {k!r}")
    return dataclasses.replace(config, **updates).validate()

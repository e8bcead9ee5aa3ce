"""Experiment configuration: one JSON file with every seed spelled out."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .nn.model import VARIANTS
from .nn.training import TrainConfig
from .noise import DEFAULT_ETAS


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything that influences a run.

    Relative paths are resolved against the directory of the config file.
    """
    data_dir: str = "data/mitdb"
    beat_file: str = "runs/beats.ecgb"
    output_dir: str = "runs"
    records: list[str] | None = None
    exclude: list[str] = field(default_factory=list)
    lead: str = "MLII"
    variant: str = "CNNe"
    split_seed: int = 0
    smote_seed: int = 0
    noise_seed: int = 0
    noise_etas: list[float] = field(default_factory=lambda: list(DEFAULT_ETAS))
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        for name in ("split_seed", "smote_seed", "noise_seed"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 0:
                raise ConfigError(f"{name} must be a non-negative integer")
        if any(e < 0 for e in self.noise_etas):
            raise ConfigError("noise_etas must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        train = d.pop("train", {})
        train_known = {f.name for f in fields(TrainConfig)}
        if set(train) - train_known:
            raise ConfigError(f"unknown train keys: {sorted(set(train) - train_known)}")
        try:
            return cls(**d, train=TrainConfig(**train))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Every seed set to ``seed``."""
        return replace(self, split_seed=seed, smote_seed=seed, noise_seed=seed,
                       train=replace(self.train, seed=seed))

    def seeds(self) -> dict[str, int]:
        return dict(split=self.split_seed, smote=self.smote_seed, train=self.train.seed, noise=self.noise_seed)

    def hash(self) -> str:
        """Short digest of the canonical JSON; paths excluded so moving a run keeps it."""
        d = self.to_dict()
        for key in ("data_dir", "beat_file", "output_dir"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    cfg = ExperimentConfig.from_dict(raw)
    base = path.parent
    for key in ("data_dir", "beat_file", "output_dir"):
        value = Path(getattr(cfg, key))
        if not value.is_absolute():
            setattr(cfg, key, str(base / value))
    return cfg


def save_config(cfg: ExperimentConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

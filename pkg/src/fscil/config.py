"""Experiment configuration: protocol, training, ablation flags, paths.

The JSON layout mirrors the CLI contract:

    {"protocol": {"base_classes": 20, "way": 5, "shot": 5,
                  "sessions": 4, "seed": 7},
     "train": {"lr": 0.05, "epochs_base": 30, "epochs_inc": 20,
               "batch": 32, "scale_s": 16.0, "feature_dim": 16,
               "body_depth": 2},
     "flags": {"fc": true, "dr": true, "ms": true, "sr": true, "ft": true},
     "paths": {"train_data": "...", "test_data": "...", "store": "...",
               "report": "...", "trace": "..."}}

Unlisted train keys fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError


@dataclass
class ProtocolSpec:
    """Session layout: one base session plus `sessions` N-way K-shot ones."""

    base_classes: int
    way: int
    shot: int
    sessions: int
    seed: int = 0

    def __post_init__(self):
        if self.base_classes < 2 or self.way < 1 or self.shot < 1 or self.sessions < 0:
            raise ConfigError("protocol sizes must be positive (base_classes >= 2)")

    @property
    def total_classes(self) -> int:
        return self.base_classes + self.way * self.sessions


@dataclass
class TrainSettings:
    lr: float = 0.05
    epochs_base: int = 30
    epochs_inc: int = 20
    batch: int = 32
    scale_s: float = 16.0
    feature_dim: int = 16
    body_depth: int = 2
    hidden_dims: tuple[int, ...] = (64, 32)
    activation: str = "tanh"
    virtual_pairs: int | None = None  # None -> 2 x base class count
    virtual_samples_per_pair: int = 4
    ft_epochs: int = 20
    ft_train_tail: bool = False

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.feature_dim < 1:
            raise ConfigError("lr, batch and feature_dim must be positive")
        if not 0 < self.body_depth <= len(self.hidden_dims):
            raise ConfigError("body_depth must leave at least one tail layer")
        self.hidden_dims = tuple(self.hidden_dims)


@dataclass
class Flags:
    """Ablation toggles: forward-compatible virtual categories (fc),
    decoupled representation learning (dr), entropy model selection (ms),
    base sub-result partitioning (sr), real-class classifier fine-tune (ft)."""

    fc: bool = False
    dr: bool = False
    ms: bool = False
    sr: bool = False
    ft: bool = False
    sr_block_argmax: bool = False

    def as_dict(self) -> dict[str, bool]:
        return {"FC": self.fc, "DR": self.dr, "MS": self.ms,
                "SR": self.sr, "FT": self.ft}


@dataclass
class Paths:
    train_data: str | None = None
    test_data: str | None = None
    split: str | None = None
    store: str | None = None
    report: str | None = None
    trace: str | None = None


@dataclass
class ExperimentConfig:
    protocol: ProtocolSpec
    train: TrainSettings = field(default_factory=TrainSettings)
    flags: Flags = field(default_factory=Flags)
    paths: Paths = field(default_factory=Paths)


def _build(cls, raw: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")
    return cls(**raw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    if "protocol" not in raw:
        raise ConfigError("config needs a 'protocol' section")
    return ExperimentConfig(
        protocol=_build(ProtocolSpec, raw["protocol"], "protocol"),
        train=_build(TrainSettings, raw.get("train", {}), "train"),
        flags=_build(Flags, raw.get("flags", {}), "flags"),
        paths=_build(Paths, raw.get("paths", {}), "paths"),
    )


def save_config(cfg: ExperimentConfig, path) -> None:
    raw = {"protocol": asdict(cfg.protocol), "train": asdict(cfg.train),
           "flags": asdict(cfg.flags), "paths": asdict(cfg.paths)}
    raw["train"]["hidden_dims"] = list(cfg.train.hidden_dims)
    with open(path, "w") as fh:
        json.dump(raw, fh, indent=2, sort_keys=True)
        fh.write("\n")

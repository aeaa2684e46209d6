"""Training/model configuration shared by the classifier, trainer, CLI, and
service.  JSON config files use exactly these field names."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Mapping

BACKENDS = ("trainable", "precomputed")
ROUTING_MODES = ("gold", "predicted")
MODES = ("full", "text_only")


@dataclass(frozen=True)
class TrainingConfig:
    alpha: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 15
    batch_size: int = 32
    seed: int = 0
    epsilon: float = 1e-9
    d_text: int = 64
    d_model: int = 64
    d_fuse: int = 64
    heads: int = 4
    max_len: int = 512
    backend: str = "trainable"
    routing_mode: str = "gold"
    mode: str = "full"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.routing_mode not in ROUTING_MODES:
            raise ValueError(f"routing_mode must be one of {ROUTING_MODES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")

    @property
    def d_head(self) -> int:
        return self.d_model // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TrainingConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**dict(obj))

    def updated(self, **changes) -> "TrainingConfig":
        return replace(self, **changes)

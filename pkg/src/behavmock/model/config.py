"""Architecture and training hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..errors import ConfigInvalid

SCHEDULES = ("cosine", "step", "multiplicative")
# "constant" is the fixed learning rate used by the architecture search
ALL_SCHEDULES = SCHEDULES + ("constant",)


@dataclass(frozen=True)
class ModelConfig:
    encoder_layers: int = 1
    decoder_layers: int = 1
    embedding_size: int = 64
    feedforward_size: int = 256
    attention_heads: int = 4
    dropout: float = 0.1
    context_window: int = 5000

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("encoder_layers", "decoder_layers", "embedding_size", "feedforward_size",
                     "attention_heads", "context_window"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigInvalid(f"{name} must be a positive integer, got {value!r}")
        if self.embedding_size % self.attention_heads:
            raise ConfigInvalid(
                f"embedding_size {self.embedding_size} is not divisible by "
                f"attention_heads {self.attention_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigInvalid(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-2
    schedule: str = "cosine"
    clip_gradients: bool = True
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    validation_fraction: float = 0.2

    def __post_init__(self):
        self.validate()

    def validate(self):
        # zero is accepted so that a frozen-weights run can be expressed
        if self.learning_rate < 0:
            raise ConfigInvalid("learning_rate must be non-negative")
        if self.weight_decay < 0:
            raise ConfigInvalid("weight_decay must be non-negative")
        if self.schedule not in ALL_SCHEDULES:
            raise ConfigInvalid(f"schedule must be one of {ALL_SCHEDULES}, got {self.schedule!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigInvalid("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigInvalid("validation_fraction must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

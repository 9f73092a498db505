import math
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional

from common.errors import ContractError


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 10000
    batch_size: int = 5
    clip_duration: float = 10.0
    lr_init: float = 5e-4
    lr_min: float = 0.0
    seed: int = 0
    checkpoint_every: int = 1000
    grad_clip: Optional[float] = 3.0
    augment: bool = True
    init_checkpoint: Optional[str] = None

    def __post_init__(self):
        if self.steps <= 0:
            raise ContractError(f"steps must be > 0, got {self.steps}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_init <= 0 or self.lr_min < 0 or self.lr_min > self.lr_init:
            raise ContractError("need 0 <= lr_min <= lr_init and lr_init > 0")
        if self.clip_duration <= 0:
            raise ContractError("clip_duration must be positive")
        if self.checkpoint_every < 1:
            raise ContractError("checkpoint_every must be >= 1")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ContractError("grad_clip must be positive or None")

    @classmethod
    def from_dict(cls, data: Dict, base: Optional["TrainConfig"] = None) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return replace(base or cls(), **{k: v for k, v in data.items() if k in known})


TRANSCRIPTION_DEFAULTS = TrainConfig(steps=10000, batch_size=5, clip_duration=10.0, checkpoint_every=1000)
ARTICULATION_DEFAULTS = TrainConfig(steps=1000, batch_size=128, clip_duration=2.0, checkpoint_every=100,
                                    augment=False)


def cosine_lr(step: int, config: TrainConfig) -> float:
    if not 0 <= step <= config.steps:
        raise ContractError(f"step {step} outside 0..{config.steps}")
    cos_factor = 0.5 * (1.0 + math.cos(math.pi * step / config.steps))
    return config.lr_min + cos_factor * (config.lr_init - config.lr_min)

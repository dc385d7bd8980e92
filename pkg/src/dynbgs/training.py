"""Training configuration and the bits both training loops share."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from .errors import NumericError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


AUTOENCODER_DEFAULTS = TrainConfig(learning_rate=1e-4, epochs=50, batch_size=8)
UNET_DEFAULTS = TrainConfig(learning_rate=5e-3, epochs=50, batch_size=4)


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches for one epoch."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def check_finite(loss: float, model_kind: str, epoch: int, step: int):
    if not math.isfinite(loss):
        raise NumericError(
            f"{model_kind} training diverged: loss={loss} at epoch {epoch + 1}, step {step + 1}; "
            "try a lower learning rate"
        )


def make_adam(module: torch.nn.Module, config: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(module.parameters(), lr=config.learning_rate)

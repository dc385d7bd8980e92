"""Fully connected autoencoder that reconstructs the static background of a
scene from a single frame.

Frames are flattened row-major (height, width, channel), so a checkpoint is
tied to the working size it was trained at.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .checkpoint import Checkpoint
from .errors import DataError, ShapeMismatchError
from .training import AUTOENCODER_DEFAULTS, TrainConfig, batches, check_finite, make_adam

HIDDEN_UNITS = (64, 32, 16, 4, 16, 32, 64)


class Autoencoder(nn.Module):
    def __init__(self, input_dim: int, hidden_units: Sequence[int] = HIDDEN_UNITS):
        super().__init__()
        if input_dim <= min(hidden_units):
            raise ValueError(
                f"input_dim {input_dim} must exceed the bottleneck width {min(hidden_units)}"
            )
        self.input_dim = int(input_dim)
        self.hidden_units = tuple(int(u) for u in hidden_units)
        widths = (self.input_dim, *self.hidden_units, self.input_dim)
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            layers.append(nn.Linear(fan_in, fan_out))
            layers.append(nn.SELU() if i < len(widths) - 2 else nn.Sigmoid())
        self.layers = nn.Sequential(*layers)

    def reset_parameters(self, generator: Optional[torch.Generator] = None):
        # LeCun normal, the companion initialization of SELU.
        for m in self.layers:
            if isinstance(m, nn.Linear):
                nn.init.normal_(m.weight, 0.0, m.in_features ** -0.5, generator=generator)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        return self.layers(x)

    def spec(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_units": list(self.hidden_units)}


def build_autoencoder(working_size, generator: Optional[torch.Generator] = None) -> Autoencoder:
    input_dim = int(np.prod(working_size))
    model = Autoencoder(input_dim)
    model.reset_parameters(generator)
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def reconstruction_loss(inputs, outputs):
    """Sum over the batch of per-frame L1 reconstruction error.

    Tensors in, tensor out (differentiable); anything else in, float out.
    """
    as_float = not (torch.is_tensor(inputs) or torch.is_tensor(outputs))
    a = torch.as_tensor(np.asarray(inputs) if as_float else inputs)
    b = torch.as_tensor(np.asarray(outputs) if as_float else outputs)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"reconstruction_loss: shapes {tuple(a.shape)} and {tuple(b.shape)}")
    loss = (a - b).abs().sum()
    return float(loss) if as_float else loss


def _flatten(frames) -> torch.Tensor:
    arr = np.asarray(frames, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr.reshape(arr.shape[0], -1)))


def train_autoencoder(
    frames,
    config: TrainConfig = AUTOENCODER_DEFAULTS,
    fingerprint: Optional[dict] = None,
    history: Optional[list] = None,
) -> Checkpoint:
    """Fit the autoencoder to object-free frames (N x H x W x 3).

    Frames are reshuffled every epoch with the run seed. Per-epoch mean
    per-frame loss is appended to ``history`` when given.
    """
    frames = np.asarray(frames if not isinstance(frames, list) else np.stack(frames), dtype=np.float32)
    if frames.ndim != 4 or frames.shape[0] == 0:
        raise DataError("train_autoencoder: need at least one H x W x C training frame")
    working_size = frames.shape[1:]
    x = _flatten(frames)

    gen = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = build_autoencoder(working_size, gen)
    opt = make_adam(model, config)
    model.train()
    for epoch in range(config.epochs):
        total = 0.0
        for step, idx in enumerate(batches(len(x), config.batch_size, rng)):
            batch = x[torch.from_numpy(idx)]
            opt.zero_grad()
            loss = reconstruction_loss(batch, model(batch))
            check_finite(loss.item(), "autoencoder", epoch, step)
            loss.backward()
            opt.step()
            total += loss.item()
        if history is not None:
            history.append(total / len(x))

    fp = {"seed": config.seed, **(fingerprint or {})}
    return Checkpoint.from_module("autoencoder", model, model.spec(), working_size, fp)


def generate_background(checkpoint: Checkpoint, frame: np.ndarray) -> np.ndarray:
    """Static background for one H x W x C frame (or a batch N x H x W x C)."""
    frame = np.asarray(frame, dtype=np.float32)
    single = frame.ndim == 3
    batch = frame[None] if single else frame
    if tuple(batch.shape[1:]) != checkpoint.working_size:
        raise ShapeMismatchError(
            f"frame shape {tuple(batch.shape[1:])} does not match autoencoder working size "
            f"{checkpoint.working_size}"
        )
    with torch.no_grad():
        out = checkpoint.model()(_flatten(batch)).numpy().reshape(batch.shape)
    return out[0] if single else out

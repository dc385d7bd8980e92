"""U-Net that predicts which pixels of a frame belong to moving background.

It is trained only on object-free frames of one scene and is meant to
overfit them: at test time it keeps marking the scene's familiar motion and
has no reason to mark an object it never saw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import Checkpoint
from .errors import DataError, ShapeMismatchError
from .training import UNET_DEFAULTS, TrainConfig, batches, check_finite, make_adam

FEATURES = (64, 128, 256, 512, 1024)
MULTIPLE = 2 ** (len(FEATURES) - 1)


@dataclass
class PaddedFrame:
    tensor: np.ndarray
    original_size: tuple[int, int]

    def crop(self, arr: Optional[np.ndarray] = None) -> np.ndarray:
        h, w = self.original_size
        arr = self.tensor if arr is None else arr
        return arr[:h, :w]


def pad_to_multiple(frame: np.ndarray, m: int = MULTIPLE) -> PaddedFrame:
    """Reflection-pad bottom and right so H and W are multiples of ``m``."""
    frame = np.asarray(frame)
    h, w = frame.shape[:2]
    ph, pw = -h % m, -w % m
    if ph or pw:
        pad = [(0, ph), (0, pw)] + [(0, 0)] * (frame.ndim - 2)
        frame = np.pad(frame, pad, mode="reflect")
    return PaddedFrame(frame, (h, w))


def _double_conv(cin, cout):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    """Four 2x2 max-pool steps down, four stride-2 3x3 transposed convs up,
    'same' padding throughout and a 1x1 two-class head."""

    def __init__(self, features: Sequence[int] = FEATURES, in_channels: int = 3, n_classes: int = 2):
        super().__init__()
        self.features = tuple(int(f) for f in features)
        self.in_channels = in_channels
        self.n_classes = n_classes
        f = self.features
        depth = len(f) - 1
        self.down = nn.ModuleList(
            _double_conv(in_channels if i == 0 else f[i - 1], f[i]) for i in range(depth)
        )
        self.bottom = _double_conv(f[depth - 1], f[depth])
        self.up = nn.ModuleList(
            nn.ConvTranspose2d(f[i + 1], f[i], 3, stride=2, padding=1, output_padding=1)
            for i in range(depth)
        )
        self.merge = nn.ModuleList(_double_conv(2 * f[i], f[i]) for i in range(depth))
        self.head = nn.Conv2d(f[0], n_classes, 1)

    @property
    def multiple(self) -> int:
        return 2 ** (len(self.features) - 1)

    def reset_parameters(self, generator: Optional[torch.Generator] = None):
        # Glorot-uniform kernels and zero biases.
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.xavier_uniform_(m.weight, generator=generator)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = F.max_pool2d(x, 2, 2)
        x = self.bottom(x)
        for i in reversed(range(len(self.down))):
            x = self.merge[i](torch.cat([skips[i], self.up[i](x)], dim=1))
        return self.head(x)

    def spec(self) -> dict:
        return {"features": list(self.features), "in_channels": self.in_channels, "n_classes": self.n_classes}


def build_unet(features: Sequence[int] = FEATURES, generator: Optional[torch.Generator] = None) -> UNet:
    model = UNet(features)
    model.reset_parameters(generator)
    return model


def _to_nchw(frames: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(frames.transpose(0, 3, 1, 2), dtype=np.float32))


def segmentation_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel two-class cross-entropy."""
    return F.cross_entropy(logits, labels.long())


def train_unet(
    frames,
    labels,
    config: TrainConfig = UNET_DEFAULTS,
    features: Sequence[int] = FEATURES,
    fingerprint: Optional[dict] = None,
    history: Optional[list] = None,
) -> Checkpoint:
    frames = np.asarray(frames, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.uint8)
    if frames.ndim != 4 or len(frames) == 0:
        raise DataError("train_unet: need at least one H x W x C training frame")
    if len(frames) != len(labels):
        raise DataError(f"train_unet: {len(frames)} frames but {len(labels)} label masks")
    if labels.shape[1:] != frames.shape[1:3]:
        raise ShapeMismatchError(f"train_unet: labels {labels.shape[1:]} vs frames {frames.shape[1:3]}")

    gen = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    model = build_unet(features, gen)
    m = model.multiple
    x = _to_nchw(np.stack([pad_to_multiple(f, m).tensor for f in frames]))
    y = torch.from_numpy(np.stack([pad_to_multiple(l, m).tensor for l in labels]).astype(np.int64))

    opt = make_adam(model, config)
    model.train()
    for epoch in range(config.epochs):
        total = 0.0
        for step, idx in enumerate(batches(len(x), config.batch_size, rng)):
            idx = torch.from_numpy(idx)
            opt.zero_grad()
            loss = segmentation_loss(model(x[idx]), y[idx])
            check_finite(loss.item(), "unet", epoch, step)
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        if history is not None:
            history.append(total / len(x))

    fp = {"seed": config.seed, **(fingerprint or {})}
    return Checkpoint.from_module("unet", model, model.spec(), frames.shape[1:], fp)


def dynamic_logits(checkpoint: Checkpoint, frames: np.ndarray) -> np.ndarray:
    """Raw N x 2 x H x W logits for a batch of frames of any H x W."""
    frames = np.asarray(frames, dtype=np.float32)
    if frames.shape[-1] != checkpoint.working_size[-1]:
        raise ShapeMismatchError(
            f"frame has {frames.shape[-1]} channels, U-Net expects {checkpoint.working_size[-1]}"
        )
    model = checkpoint.model()
    padded = [pad_to_multiple(f, model.multiple) for f in frames]
    with torch.no_grad():
        logits = model(_to_nchw(np.stack([p.tensor for p in padded]))).numpy()
    h, w = frames.shape[1:3]
    return logits[:, :, :h, :w]


def predict_dynamic(checkpoint: Checkpoint, frame: np.ndarray) -> np.ndarray:
    """Binary dynamic-background mask; exact logit ties go to class 0."""
    frame = np.asarray(frame, dtype=np.float32)
    single = frame.ndim == 3
    logits = dynamic_logits(checkpoint, frame[None] if single else frame)
    mask = (logits[:, 1] > logits[:, 0]).astype(np.uint8)
    return mask[0] if single else mask

"""Dynamic-background labels from object-free frames.

On frames without moving objects, whatever the autoencoder fails to
reconstruct is background motion; thresholding that residual gives the
per-pixel targets the U-Net is trained on.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import DataError, ShapeMismatchError
from .static_background import generate_background

_REDUCERS = {"max": np.max, "mean": np.mean}


@dataclass(frozen=True)
class LabelPrepConfig:
    theta_label: float = 0.1
    channel_reduce: str = "max"

    def __post_init__(self):
        if not 0 < self.theta_label < 1:
            raise ValueError(f"theta_label must be in (0, 1), got {self.theta_label}")
        if self.channel_reduce not in _REDUCERS:
            raise ValueError(f"channel_reduce must be one of {sorted(_REDUCERS)}")


def residual(I: np.ndarray, B: np.ndarray, reduce: str = "max") -> np.ndarray:
    """Per-pixel absolute difference reduced over channels (H x W)."""
    I = np.asarray(I)
    B = np.asarray(B)
    if I.shape != B.shape:
        raise ShapeMismatchError(f"residual: shapes {I.shape} and {B.shape}")
    diff = np.abs(I.astype(np.float32) - B.astype(np.float32))
    if diff.ndim == 2:
        return diff
    return _REDUCERS[reduce](diff, axis=-1).astype(np.float32)


def threshold_residual(r: np.ndarray, theta: float) -> np.ndarray:
    return (r > theta).astype(np.uint8)


def make_dynamic_labels(frames, checkpoint, config: LabelPrepConfig = LabelPrepConfig()) -> list:
    frames = list(frames) if not isinstance(frames, np.ndarray) else frames
    if len(frames) == 0:
        raise DataError("make_dynamic_labels: empty frame stream")
    labels = []
    for frame in frames:
        B = generate_background(checkpoint, frame)
        labels.append(threshold_residual(residual(frame, B, config.channel_reduce), config.theta_label))
    return labels


def save_labels(labels, directory, indices) -> list[Path]:
    """Write ``dbg%06d.png`` label images with values {0, 255}."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, mask in zip(indices, labels):
        p = directory / f"dbg{i:06d}.png"
        cv2.imwrite(str(p), (np.asarray(mask, np.uint8) * 255))
        paths.append(p)
    return paths


def load_labels(directory, indices) -> list[np.ndarray]:
    out = []
    for i in indices:
        img = cv2.imread(str(Path(directory) / f"dbg{i:06d}.png"), cv2.IMREAD_GRAYSCALE)
        if img is None:
            raise DataError(f"missing label image dbg{i:06d}.png in {directory}")
        out.append((img > 127).astype(np.uint8))
    return out

"""Deterministic synthetic scenes with a dynamic background.

A smooth colour plate is overlaid with a band of drifting sinusoidal stripes
plus per-pixel flicker (the "water"), global sensor noise on everything, and
in the test frames a flat-coloured square moving on a straight line. Because
every pixel is generated from closed-form terms, the object and dynamic
texture masks are exact.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import cv2
import numpy as np


@dataclass(frozen=True)
class SynthSceneSpec:
    size: tuple[int, int] = (64, 64)
    n_train: int = 120
    n_test: int = 60
    plate_top_left: tuple[float, float, float] = (0.30, 0.42, 0.55)
    plate_bottom_right: tuple[float, float, float] = (0.55, 0.58, 0.42)
    # (top, left, height, width)
    dynamic_region: tuple[int, int, int, int] = (40, 0, 24, 64)
    dynamic_color: tuple[float, float, float] = (0.15, 0.35, 0.55)
    stripe_amplitude: float = 0.15
    stripe_period: float = 8.0
    stripe_speed: float = 0.7  # radians of phase per frame
    dynamic_noise: float = 0.2  # sigma_d, uniform half-width
    object_side: int = 8
    object_color: tuple[float, float, float] = (0.95, 0.2, 0.1)
    object_start: tuple[float, float] = (6.0, 4.0)  # (row, col) of the top-left corner
    object_velocity: tuple[float, float] = (0.5, 0.8)  # pixels per test frame
    sensor_noise: float = 0.02  # sigma_g, uniform half-width
    seed: int = 0

    def __post_init__(self):
        h, w = self.size
        if h < 1 or w < 1 or self.n_train < 0 or self.n_test < 0:
            raise ValueError("size, n_train and n_test must be positive")
        top, left, rh, rw = self.dynamic_region
        if rh < 0 or rw < 0 or top < 0 or left < 0 or top + rh > h or left + rw > w:
            raise ValueError(f"dynamic_region {self.dynamic_region} does not fit a {h}x{w} frame")
        if self.object_side < 1:
            raise ValueError("object_side must be >= 1")
        for t in range(self.n_test):
            r, c = self.object_position(t)
            if r < 0 or c < 0 or r + self.object_side > h or c + self.object_side > w:
                raise ValueError(
                    f"object trajectory leaves the frame at test frame {t + 1} (top-left {(r, c)})"
                )

    def object_position(self, t: int) -> tuple[int, int]:
        r0, c0 = self.object_start
        dr, dc = self.object_velocity
        return int(np.floor(r0 + dr * t + 0.5)), int(np.floor(c0 + dc * t + 0.5))

    @property
    def texture_is_dynamic(self) -> bool:
        moving = self.stripe_amplitude if self.stripe_speed % (2 * np.pi) != 0 else 0.0
        return moving + self.dynamic_noise > self.sensor_noise

    def to_dict(self) -> dict:
        return asdict(self)


class SynthScene(NamedTuple):
    train_frames: np.ndarray     # n_train x H x W x 3, float32 in [0, 1]
    test_frames: np.ndarray      # n_test x H x W x 3
    gt_object_masks: np.ndarray  # (n_train + n_test) x H x W, {0, 1}
    gt_dynamic_masks: np.ndarray # (n_train + n_test) x H x W, {0, 1}
    tags: list                   # 0 for training frames, 1 for test frames


def _plate(spec: SynthSceneSpec) -> np.ndarray:
    h, w = spec.size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    s = (yy / max(h - 1, 1) + xx / max(w - 1, 1)) / 2
    a = np.asarray(spec.plate_top_left)
    b = np.asarray(spec.plate_bottom_right)
    return a + s[..., None] * (b - a)


def generate_scene(spec: SynthSceneSpec = SynthSceneSpec()) -> SynthScene:
    h, w = spec.size
    rng = np.random.default_rng(spec.seed)
    plate = _plate(spec)
    top, left, rh, rw = spec.dynamic_region
    region = np.zeros((h, w), bool)
    region[top:top + rh, left:left + rw] = True
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    k = 2 * np.pi / spec.stripe_period
    static_base = plate.copy()
    static_base[region] = spec.dynamic_color

    n = spec.n_train + spec.n_test
    frames = np.empty((n, h, w, 3), np.float32)
    obj = np.zeros((n, h, w), np.uint8)
    for t in range(n):
        img = static_base.copy()
        stripes = spec.stripe_amplitude * np.sin(k * (xx + 0.5 * yy) + spec.stripe_speed * t)
        flicker = rng.uniform(-spec.dynamic_noise, spec.dynamic_noise, (h, w, 3))
        img[region] += stripes[region][:, None] + flicker[region]
        if t >= spec.n_train:
            r, c = spec.object_position(t - spec.n_train)
            obj[t, r:r + spec.object_side, c:c + spec.object_side] = 1
            img[obj[t] > 0] = spec.object_color
        img += rng.uniform(-spec.sensor_noise, spec.sensor_noise, (h, w, 3))
        frames[t] = np.clip(img, 0.0, 1.0)

    dyn = np.zeros((n, h, w), np.uint8)
    if spec.texture_is_dynamic:
        dyn[:] = region
        dyn[obj > 0] = 0
    tags = [0] * spec.n_train + [1] * spec.n_test
    return SynthScene(frames[:spec.n_train], frames[spec.n_train:], obj, dyn, tags)


def temporal_std_ratio(scene: SynthScene, spec: SynthSceneSpec) -> float:
    """Mean temporal std of the dynamic region over that of the static area,
    measured on the training frames."""
    std = scene.train_frames.std(axis=0).mean(axis=-1)
    top, left, rh, rw = spec.dynamic_region
    region = np.zeros(spec.size, bool)
    region[top:top + rh, left:left + rw] = True
    return float(std[region].mean() / std[~region].mean())


def export_cdnet(scene: SynthScene, spec: SynthSceneSpec, directory, jpeg_quality: int = 95) -> Path:
    """Write the scene in the CDnet-2014 directory layout.

    Training frames come first; the temporal ROI covers the test frames.
    """
    if spec.n_test < 1:
        raise ValueError("export_cdnet: need at least one test frame for the temporal ROI")
    root = Path(directory)
    (root / "input").mkdir(parents=True, exist_ok=True)
    (root / "groundtruth").mkdir(parents=True, exist_ok=True)
    frames = np.concatenate([scene.train_frames, scene.test_frames])
    for i, (frame, gt) in enumerate(zip(frames, scene.gt_object_masks), 1):
        bgr = cv2.cvtColor(np.round(frame * 255).astype(np.uint8), cv2.COLOR_RGB2BGR)
        cv2.imwrite(str(root / "input" / f"in{i:06d}.jpg"), bgr, [cv2.IMWRITE_JPEG_QUALITY, jpeg_quality])
        cv2.imwrite(str(root / "groundtruth" / f"gt{i:06d}.png"), gt * np.uint8(255))
    cv2.imwrite(str(root / "ROI.bmp"), np.full(spec.size, 255, np.uint8))
    (root / "temporalROI.txt").write_text(f"{spec.n_train + 1} {spec.n_train + spec.n_test}\n")
    (root / "tags.txt").write_text("".join(f"{t}\n" for t in scene.tags))
    return root

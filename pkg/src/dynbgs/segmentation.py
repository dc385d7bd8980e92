"""Test-phase pipeline: residual against the generated background, dynamic
suppression, adaptive per-pixel thresholds and mask clean-up.

Per frame t:

    F_t      = r(I_t, B_t) * (1 - D_t)
    S_init_t = F_t > alpha * maxF
    C        = mean over consecutive frames of S_init_t XOR S_init_{t-1}
    R        = beta * maxF + C
    S_t      = F_t > R

All comparisons are strict, so ties fall to background.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import cv2
import numpy as np

from .data_ingest import ScalePolicy, SequenceManifest, iter_frames
from .dynamic_background import predict_dynamic
from .errors import ShapeMismatchError
from .label_prep import residual
from .static_background import generate_background


@dataclass(frozen=True)
class ThresholdParams:
    alpha: float = 0.2
    beta: float = 0.08

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")


@dataclass(frozen=True)
class PostProcParams:
    median_kernel: int = 5
    closing_kernel: int = 3
    closing_iterations: int = 1

    def __post_init__(self):
        if self.median_kernel < 1 or self.median_kernel % 2 == 0:
            raise ValueError(f"median_kernel must be odd and >= 1, got {self.median_kernel}")
        if self.closing_kernel < 1 or self.closing_iterations < 0:
            raise ValueError("closing_kernel must be >= 1 and closing_iterations >= 0")


@dataclass
class EntropyMapState:
    C: np.ndarray
    prev_init_mask: Optional[np.ndarray] = None
    frames_seen: int = 0
    running_max_F: float = 0.0

    @classmethod
    def empty(cls, shape, running_max_F: float = 0.0) -> "EntropyMapState":
        return cls(np.zeros(shape, np.float64), None, 0, float(running_max_F))

    def observe_max(self, F: np.ndarray) -> "EntropyMapState":
        m = max(self.running_max_F, float(np.max(F)) if np.size(F) else 0.0)
        return EntropyMapState(self.C, self.prev_init_mask, self.frames_seen, m)


@dataclass
class SegmentationResult:
    frame_index: int
    S_init: np.ndarray
    S_final: np.ndarray
    S_postproc: np.ndarray
    F: np.ndarray
    D: np.ndarray
    B: np.ndarray
    max_F: float = 0.0
    mean_C: float = 0.0


def _same_hw(a, b, what):
    if np.shape(a)[:2] != np.shape(b)[:2]:
        raise ShapeMismatchError(f"{what}: shapes {np.shape(a)} and {np.shape(b)}")


def compose_foreground(I, B, D, reduce: str = "max") -> np.ndarray:
    r = residual(I, B, reduce)
    _same_hw(r, D, "compose_foreground")
    return r * (1 - np.asarray(D, dtype=np.float32))


def initial_segment(F: np.ndarray, alpha: float, max_F: float) -> np.ndarray:
    return (np.asarray(F) > alpha * max_F).astype(np.uint8)


def update_entropy(state: EntropyMapState, S_init_t: np.ndarray) -> EntropyMapState:
    """Fold one initial mask into the flip-rate map.

    Incremental form of the batch mean of XOR over consecutive frames; after
    frame N it equals the batch value for frames 1..N.
    """
    S = np.asarray(S_init_t, dtype=np.uint8)
    if S.shape != state.C.shape:
        raise ShapeMismatchError(f"update_entropy: mask {S.shape} vs state {state.C.shape}")
    t = state.frames_seen + 1
    if t == 1:
        C = np.zeros_like(state.C)
    else:
        flips = np.bitwise_xor(S, state.prev_init_mask)
        C = ((t - 2) * state.C + flips) / (t - 1)
    return EntropyMapState(C, S.copy(), t, state.running_max_F)


def batch_entropy(masks) -> np.ndarray:
    """Flip-rate map over a whole mask sequence, computed in one go."""
    masks = np.asarray(masks, dtype=np.uint8)
    if len(masks) < 2:
        return np.zeros(masks.shape[1:], np.float64)
    flips = np.bitwise_xor(masks[1:], masks[:-1]).sum(axis=0)
    return flips / (len(masks) - 1)


def distance_threshold(state: EntropyMapState, beta: float) -> np.ndarray:
    if state.frames_seen < 1:
        raise ValueError("distance_threshold needs at least one processed frame")
    return beta * state.running_max_F + state.C


def final_segment(F: np.ndarray, R: np.ndarray) -> np.ndarray:
    _same_hw(F, R, "final_segment")
    return (np.asarray(F) > np.asarray(R)).astype(np.uint8)


def postprocess(S: np.ndarray, params: PostProcParams = PostProcParams()) -> np.ndarray:
    """Median blur, then binary closing; borders replicate edge pixels."""
    img = (np.asarray(S, dtype=np.uint8) > 0).astype(np.uint8) * 255
    if params.median_kernel > 1:
        img = cv2.medianBlur(img, params.median_kernel)
    if params.closing_iterations > 0 and params.closing_kernel > 1:
        kernel = np.ones((params.closing_kernel, params.closing_kernel), np.uint8)
        img = cv2.morphologyEx(
            img, cv2.MORPH_CLOSE, kernel,
            iterations=params.closing_iterations, borderType=cv2.BORDER_REPLICATE,
        )
    return (img > 127).astype(np.uint8)


@dataclass
class PipelineHead:
    """The network half of the pipeline: B, D and F for one frame."""

    ae: object
    unet: object
    reduce: str = "max"

    def __call__(self, frame):
        B = generate_background(self.ae, frame)
        D = predict_dynamic(self.unet, frame)
        return B, D, compose_foreground(frame, B, D, self.reduce)


def calibrate_max_F(frames, ae, unet, reduce: str = "max") -> float:
    """Largest foreground value over object-free frames."""
    head = PipelineHead(ae, unet, reduce)
    best = 0.0
    for frame in frames:
        best = max(best, float(head(frame)[2].max()))
    return best


def check_checkpoints(ae, unet, working_size=None):
    if ae.working_size != unet.working_size:
        raise ShapeMismatchError(
            f"autoencoder working size {ae.working_size} differs from U-Net's {unet.working_size}"
        )
    if working_size is not None and tuple(working_size) != ae.working_size:
        raise ShapeMismatchError(
            f"frames are {tuple(working_size)} but the checkpoints were trained at {ae.working_size}"
        )


def _frame_source(source, policy, working_size):
    if isinstance(source, SequenceManifest):
        policy = policy or ScalePolicy()
        hw = policy.working_hw(*source.native_size[:2])
        if working_size is not None and tuple(hw) != tuple(working_size[:2]):
            raise ShapeMismatchError(
                f"{source.name}: working size {hw} does not match checkpoints {working_size[:2]}"
            )
        first, last = source.temporal_roi
        return iter_frames(source, range(first, last + 1), policy)
    return iter(source)


def run_pipeline(
    source,
    ae,
    unet,
    params: ThresholdParams = ThresholdParams(),
    post: PostProcParams = PostProcParams(),
    calibration_max_F: float = 0.0,
    policy: Optional[ScalePolicy] = None,
    reduce: str = "max",
) -> Iterator[SegmentationResult]:
    """Stream results strictly online: frame t+1 is not pulled from
    ``source`` until the result for frame t has been yielded.

    ``source`` is a manifest (its temporal-ROI frames are used) or any
    iterable of ``(index, frame)`` pairs.
    """
    check_checkpoints(ae, unet)
    head = PipelineHead(ae, unet, reduce)
    state = None
    for index, frame in _frame_source(source, policy, ae.working_size):
        ae.require_size(np.shape(frame), "frame")
        B, D, F = head(frame)
        if state is None:
            state = EntropyMapState.empty(F.shape, calibration_max_F)
        state = state.observe_max(F)
        S_init = initial_segment(F, params.alpha, state.running_max_F)
        state = update_entropy(state, S_init)
        S = final_segment(F, distance_threshold(state, params.beta))
        yield SegmentationResult(
            index, S_init, S, postprocess(S, post), F, D, B,
            max_F=state.running_max_F, mean_C=float(state.C.mean()),
        )


def run_pipeline_batch(
    source,
    ae,
    unet,
    params: ThresholdParams = ThresholdParams(),
    post: PostProcParams = PostProcParams(),
    calibration_max_F: float = 0.0,
    policy: Optional[ScalePolicy] = None,
    reduce: str = "max",
) -> list[SegmentationResult]:
    """Offline variant: one max(F) over every frame (and the calibration
    value) and one flip-rate map over the whole sequence, applied to all
    frames alike."""
    check_checkpoints(ae, unet)
    head = PipelineHead(ae, unet, reduce)
    staged = []
    for index, frame in _frame_source(source, policy, ae.working_size):
        ae.require_size(np.shape(frame), "frame")
        staged.append((index, *head(frame)))
    if not staged:
        return []
    max_F = max([calibration_max_F] + [float(F.max()) for *_, F in staged])
    inits = [initial_segment(F, params.alpha, max_F) for *_, F in staged]
    C = batch_entropy(inits)
    R = params.beta * max_F + C
    results = []
    for (index, B, D, F), S_init in zip(staged, inits):
        S = final_segment(F, R)
        results.append(SegmentationResult(
            index, S_init, S, postprocess(S, post), F, D, B, max_F=max_F, mean_C=float(C.mean()),
        ))
    return results

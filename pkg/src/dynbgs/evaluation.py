"""CDnet-2014 style scoring, reports, the temporal-median foil and the
throughput benchmark.

Ground-truth encoding: 0 static, 50 shadow (both negative), 85 outside the
region of interest and 170 unknown (both ignored), 255 motion (positive).
"""

from __future__ import annotations

import csv
import json
import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np
import torch

from .data_ingest import SequenceManifest, read_mask, resize_mask
from .errors import DataError, ShapeMismatchError
from .label_prep import residual
from .segmentation import PostProcParams, ThresholdParams, postprocess, run_pipeline

GT_POSITIVE = 255
GT_NEGATIVE = (0, 50)
GT_IGNORED = (85, 170)
_GT_VALUES = (*GT_NEGATIVE, *GT_IGNORED, GT_POSITIVE)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def recall(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fn)


def precision(c: ConfusionCounts) -> float:
    return _ratio(c.tp, c.tp + c.fp)


def f_measure(counts: ConfusionCounts) -> float:
    r, p = recall(counts), precision(counts)
    if r + p == 0:
        return 0.0
    return 2 * (r * p) / (r + p)


@dataclass
class EvalReport:
    sequence: str
    counts: ConfusionCounts
    recall: float
    precision: float
    f_measure: float
    frames_evaluated: int

    @classmethod
    def from_counts(cls, name: str, counts: ConfusionCounts, frames: int) -> "EvalReport":
        return cls(name, counts, recall(counts), precision(counts), f_measure(counts), frames)

    CSV_FIELDS = ("sequence", "tp", "fp", "fn", "tn", "recall", "precision", "fm")

    def csv_row(self) -> dict:
        c = self.counts
        return {
            "sequence": self.sequence, "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
            "recall": repr(self.recall), "precision": repr(self.precision), "fm": repr(self.f_measure),
        }


def compare_masks(pred: np.ndarray, gt: np.ndarray, roi: Optional[np.ndarray] = None) -> ConfusionCounts:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if roi is None:
        roi = np.ones(gt.shape, bool)
    elif np.shape(roi) != gt.shape:
        raise ShapeMismatchError(f"ROI {np.shape(roi)} vs ground truth {gt.shape}")
    unexpected = np.setdiff1d(np.unique(gt), _GT_VALUES)
    if unexpected.size:
        raise DataError(f"unexpected ground-truth value(s) {unexpected.tolist()}")
    inside = np.asarray(roi) > 0
    on = pred > 0
    pos = inside & (gt == GT_POSITIVE)
    neg = inside & np.isin(gt, GT_NEGATIVE)
    return ConfusionCounts(
        tp=int(np.count_nonzero(pos & on)),
        fp=int(np.count_nonzero(neg & on)),
        fn=int(np.count_nonzero(pos & ~on)),
        tn=int(np.count_nonzero(neg & ~on)),
    )


def _mask_lookup(masks, index: int):
    if isinstance(masks, (str, os.PathLike)):
        path = Path(masks) / f"bin{index:06d}.png"
        return read_mask(path) if path.exists() else None
    return masks.get(index)


def evaluate_sequence(manifest: SequenceManifest, masks) -> EvalReport:
    """Accumulate counts over every evaluable frame of the temporal ROI.

    ``masks`` is a directory of ``bin%06d.png`` files or a mapping from
    1-based frame index to mask. Masks smaller than the ground truth are
    upscaled with nearest neighbour.
    """
    indices = manifest.eval_indices()
    if not indices:
        raise DataError(f"{manifest.name}: no ground truth inside the temporal ROI, cannot evaluate")
    if isinstance(masks, (str, os.PathLike)) and not Path(masks).is_dir():
        raise DataError(f"mask directory {masks} does not exist")
    missing = [i for i in indices if _mask_lookup(masks, i) is None]
    if missing:
        raise DataError(f"{manifest.name}: no mask for frame(s) {missing}")
    total = ConfusionCounts()
    roi = manifest.roi_mask
    for i in indices:
        gt = read_mask(manifest.gt_path(i))
        pred = np.asarray(_mask_lookup(masks, i))
        pred = resize_mask((pred > 0).astype(np.uint8), gt.shape)
        r = None if roi is None else resize_mask(roi, gt.shape)
        total = total + compare_masks(pred, gt, r)
    return EvalReport.from_counts(manifest.name, total, len(indices))


def evaluate_arrays(name: str, preds: Iterable[np.ndarray], gts: Iterable[np.ndarray], roi=None) -> EvalReport:
    """Score in-memory prediction / {0,1} ground-truth pairs."""
    total = ConfusionCounts()
    n = 0
    for pred, gt in zip(preds, gts):
        gt = np.asarray(gt)
        gt8 = np.where(gt > 0, GT_POSITIVE, 0).astype(np.uint8) if gt.max(initial=0) <= 1 else gt
        total = total + compare_masks(pred, gt8, roi)
        n += 1
    return EvalReport.from_counts(name, total, n)


def write_report_csv(reports: Iterable[EvalReport], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, EvalReport.CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for r in reports:
            writer.writerow(r.csv_row())
    return path


def summary_table(results: Mapping[str, Mapping[str, float]]) -> str:
    """Markdown table, one row per method and one column per sequence plus
    the average, F-measure to two decimals."""
    sequences = []
    for row in results.values():
        for s in row:
            if s not in sequences:
                sequences.append(s)
    lines = [
        "| Methods | " + " | ".join(sequences) + " | Avg |",
        "|---|" + "---|" * (len(sequences) + 1),
    ]
    for method, row in results.items():
        vals = [row.get(s) for s in sequences]
        present = [v for v in vals if v is not None]
        avg = sum(present) / len(present) if present else 0.0
        cells = ["-" if v is None else f"{v:.2f}" for v in vals]
        lines.append(f"| {method} | " + " | ".join(cells) + f" | {avg:.2f} |")
    return "\n".join(lines) + "\n"


def median_background(frames) -> np.ndarray:
    return np.median(np.asarray(frames, dtype=np.float32), axis=0)


def median_baseline(
    train_frames,
    test_frames: Iterable,
    theta: float = 0.1,
    post: PostProcParams = PostProcParams(),
    reduce: str = "max",
):
    """Foil: temporal-median background plus one global threshold.

    ``test_frames`` yields ``(index, frame)`` pairs; yields ``(index, mask)``.
    """
    train_frames = np.asarray(train_frames, dtype=np.float32)
    if len(train_frames) == 0:
        raise DataError("median_baseline: need at least one training frame")
    B = median_background(train_frames)
    for index, frame in test_frames:
        if np.shape(frame) != B.shape:
            raise ShapeMismatchError(f"frame {np.shape(frame)} vs median background {B.shape}")
        yield index, postprocess((residual(frame, B, reduce) > theta).astype(np.uint8), post)


def hardware_descriptor() -> str:
    cpu = platform.processor() or platform.machine()
    return f"{platform.system()} {cpu}, {os.cpu_count()} CPU(s), torch {torch.__version__} ({torch.get_num_threads()} threads)"


@dataclass
class BenchmarkRecord:
    fps: float
    frames: int
    working_size: tuple
    hardware: str
    timings: list

    def to_json(self) -> str:
        d = asdict(self)
        d["working_size"] = list(self.working_size)
        return json.dumps(d, sort_keys=True)


def benchmark_fps(
    frames,
    ae,
    unet,
    params: ThresholdParams = ThresholdParams(),
    post: PostProcParams = PostProcParams(),
    warmup: int = 3,
    repeats: int = 3,
) -> BenchmarkRecord:
    """Median frames-per-second of full test passes over in-memory frames.

    Decoding is excluded: frames are preloaded so the timing covers the
    networks, thresholding and post-processing.
    """
    frames = [np.asarray(f, dtype=np.float32) for f in frames]
    if not frames:
        raise DataError("benchmark_fps: no frames")
    pairs = list(enumerate(frames, 1))
    for _ in run_pipeline(pairs[:max(warmup, 0)], ae, unet, params, post):
        pass
    timings = []
    for _ in range(max(repeats, 1)):
        start = time.perf_counter()
        for _ in run_pipeline(pairs, ae, unet, params, post):
            pass
        timings.append(time.perf_counter() - start)
    fps = len(frames) / statistics.median(timings)
    return BenchmarkRecord(fps, len(frames), tuple(ae.working_size), hardware_descriptor(), timings)


def fps_trend(working_size, unet_features, n_frames: int = 8, repeats: int = 1, seed: int = 0):
    """FPS of untrained networks at the working size and at double height
    and width. A sanity trend for logs, not a bound."""
    from .checkpoint import Checkpoint
    from .dynamic_background import build_unet
    from .static_background import build_autoencoder

    h, w, c = working_size
    out = []
    for size in ((h, w, c), (2 * h, 2 * w, c)):
        gen = torch.Generator().manual_seed(seed)
        ae_model = build_autoencoder(size, gen)
        unet_model = build_unet(unet_features, gen)
        ae = Checkpoint.from_module("autoencoder", ae_model, ae_model.spec(), size)
        unet = Checkpoint.from_module("unet", unet_model, unet_model.spec(), size)
        frames = np.random.default_rng(seed).random((n_frames, *size), dtype=np.float32)
        out.append((size, benchmark_fps(frames, ae, unet, warmup=1, repeats=repeats).fps))
    return out

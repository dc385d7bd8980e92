"""Sequence manifests for CDnet-2014 and I2R layouts, training-frame
selection and frame preprocessing.

Frame indices are 1-based everywhere, matching the CDnet file names.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import cv2
import numpy as np

from .errors import DataError, DatasetLayoutError, NoTrainingDataError

MIN_DIM = 16
_FRAME_RE = re.compile(r"(\d+)\.(?:jpg|jpeg|png|bmp|tif|tiff)$", re.IGNORECASE)
_IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff"}


@dataclass(frozen=True)
class ScalePolicy:
    """Downscale-only resize policy. ``max_dim=None`` disables scaling."""

    max_dim: Optional[int] = 320
    frame_interpolation: str = "bilinear"
    mask_interpolation: str = "nearest"

    def working_hw(self, height: int, width: int) -> tuple[int, int]:
        if self.max_dim is None or max(height, width) <= self.max_dim:
            return height, width
        scale = self.max_dim / max(height, width)
        h = max(MIN_DIM, int(np.floor(height * scale)))
        w = max(MIN_DIM, int(np.floor(width * scale)))
        return h, w


@dataclass
class SequenceManifest:
    name: str
    frame_paths: list[Path]
    gt_paths: Optional[list[Optional[Path]]] = None
    roi_mask: Optional[np.ndarray] = None
    temporal_roi: tuple[int, int] = (1, 1)
    frame_tags: Optional[list[int]] = None
    native_size: tuple[int, int, int] = (0, 0, 3)
    root: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.frame_paths)
        if n == 0:
            raise DataError(f"sequence {self.name!r} has no frames")
        if self.gt_paths is not None and len(self.gt_paths) != n:
            raise DataError(
                f"sequence {self.name!r}: {len(self.gt_paths)} ground-truth entries for {n} frames"
            )
        first, last = self.temporal_roi
        if not 1 <= first <= last <= n:
            raise DataError(f"sequence {self.name!r}: temporal ROI {self.temporal_roi} outside 1..{n}")
        if self.frame_tags is not None:
            if len(self.frame_tags) != n:
                raise DataError(f"sequence {self.name!r}: {len(self.frame_tags)} tags for {n} frames")
            if any(t not in (0, 1) for t in self.frame_tags):
                raise DataError(f"sequence {self.name!r}: frame tags must be 0 or 1")

    def __len__(self) -> int:
        return len(self.frame_paths)

    def __eq__(self, other):
        if not isinstance(other, SequenceManifest):
            return NotImplemented
        same_roi = (self.roi_mask is None and other.roi_mask is None) or (
            self.roi_mask is not None
            and other.roi_mask is not None
            and np.array_equal(self.roi_mask, other.roi_mask)
        )
        return (
            same_roi
            and self.name == other.name
            and self.frame_paths == other.frame_paths
            and self.gt_paths == other.gt_paths
            and self.temporal_roi == other.temporal_roi
            and self.frame_tags == other.frame_tags
            and self.native_size == other.native_size
        )

    @property
    def has_ground_truth(self) -> bool:
        return self.gt_paths is not None and any(p is not None for p in self.gt_paths)

    def gt_path(self, index: int) -> Optional[Path]:
        if self.gt_paths is None:
            return None
        return self.gt_paths[index - 1]

    def frame_path(self, index: int) -> Path:
        return self.frame_paths[index - 1]

    def eval_indices(self) -> list[int]:
        """Frames inside the temporal ROI that have ground truth."""
        first, last = self.temporal_roi
        return [i for i in range(first, last + 1) if self.gt_path(i) is not None]


def _read_image(path: Path, flags=cv2.IMREAD_COLOR) -> np.ndarray:
    img = cv2.imread(str(path), flags)
    if img is None:
        raise DataError(f"cannot decode image {path}")
    return img


def read_mask(path: Path) -> np.ndarray:
    """Read an 8-bit single-channel label image as stored on disk."""
    return _read_image(Path(path), cv2.IMREAD_GRAYSCALE)


def _indexed_files(directory: Path, prefix: str) -> dict[int, Path]:
    out = {}
    for p in directory.iterdir():
        if not p.name.startswith(prefix):
            continue
        m = _FRAME_RE.search(p.name[len(prefix):])
        if m and m.start() == 0:
            out[int(m.group(1))] = p
    return out


def _read_tags(path: Path, n: int) -> Optional[list[int]]:
    if not path.exists():
        return None
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    bad = [i + 1 for i, ln in enumerate(lines) if ln not in ("0", "1")]
    if bad:
        raise DataError(f"{path}: non 0/1 tag on lines {bad}")
    return [int(ln) for ln in lines]


def _native_size(path: Path) -> tuple[int, int, int]:
    img = _read_image(path)
    return img.shape[0], img.shape[1], 3


def load_cdnet_sequence(root_path) -> SequenceManifest:
    root = Path(root_path)
    if not root.is_dir():
        raise DatasetLayoutError(root, "sequence directory")
    for piece in ("input", "groundtruth"):
        if not (root / piece).is_dir():
            raise DatasetLayoutError(root, f"{piece}/")
    for piece in ("temporalROI.txt", "ROI.bmp"):
        if not (root / piece).is_file():
            raise DatasetLayoutError(root, piece)

    frames = _indexed_files(root / "input", "in")
    if not frames:
        raise DatasetLayoutError(root, "input frames (input/in%06d.jpg)")
    n = max(frames)
    holes = sorted(set(range(1, n + 1)) - set(frames))
    if holes:
        raise DatasetLayoutError(root, f"input frames {holes[:10]}")
    gts = _indexed_files(root / "groundtruth", "gt")
    if len(gts) != n or set(gts) != set(frames):
        raise DataError(f"{root}: {n} input frames but {len(gts)} ground-truth images")

    try:
        first, last = (int(v) for v in (root / "temporalROI.txt").read_text().split()[:2])
    except ValueError as exc:
        raise DataError(f"{root / 'temporalROI.txt'}: expected two integers") from exc
    roi = (read_mask(root / "ROI.bmp") > 0).astype(np.uint8)

    return SequenceManifest(
        name=root.name,
        frame_paths=[frames[i] for i in range(1, n + 1)],
        gt_paths=[gts[i] for i in range(1, n + 1)],
        roi_mask=roi,
        temporal_roi=(first, last),
        frame_tags=_read_tags(root / "tags.txt", n),
        native_size=_native_size(frames[1]),
        root=root,
    )


def load_i2r_sequence(root_path, gt_map=None, temporal_roi=None) -> SequenceManifest:
    """Load a directory of sequentially numbered frames.

    ``gt_map`` is a text file of ``<frame_index> <relative_gt_path>`` lines,
    relative to ``root_path``; frames not listed carry no ground truth.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise DatasetLayoutError(root, "sequence directory")
    numbered = []
    for p in root.iterdir():
        if p.suffix.lower() in _IMAGE_SUFFIXES:
            m = re.search(r"(\d+)$", p.stem)
            if m:
                numbered.append((int(m.group(1)), p))
    if not numbered:
        raise DatasetLayoutError(root, "numbered frame images")
    numbered.sort()
    frame_paths = [p for _, p in numbered]
    n = len(frame_paths)

    gt_paths = None
    if gt_map is not None:
        gt_paths = [None] * n
        bad = []
        for lineno, line in enumerate(Path(gt_map).read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            try:
                idx = int(parts[0])
                rel = parts[1]
                if len(parts) != 2 or not 1 <= idx <= n:
                    raise ValueError
            except (ValueError, IndexError):
                bad.append(f"{lineno}: {line!r}")
                continue
            gt_paths[idx - 1] = root / rel
        if bad:
            raise DataError(f"{gt_map}: unreadable mapping entries:\n  " + "\n  ".join(bad))

    roi_path = root / "ROI.bmp"
    return SequenceManifest(
        name=root.name,
        frame_paths=frame_paths,
        gt_paths=gt_paths,
        roi_mask=(read_mask(roi_path) > 0).astype(np.uint8) if roi_path.exists() else None,
        temporal_roi=tuple(temporal_roi) if temporal_roi else (1, n),
        frame_tags=_read_tags(root / "tags.txt", n),
        native_size=_native_size(frame_paths[0]),
        root=root,
    )


def select_training_frames(
    manifest: SequenceManifest,
    max_frames: int = 300,
    explicit_indices: Optional[Sequence[int]] = None,
) -> list[int]:
    """Pick object-free frames, earliest first.

    Explicit indices win; otherwise frame tags; otherwise every frame before
    the temporal ROI is presumed object-free.
    """
    n = len(manifest)
    if explicit_indices is not None:
        chosen = [int(i) for i in explicit_indices]
        out_of_range = [i for i in chosen if not 1 <= i <= n]
        if out_of_range:
            raise DataError(f"training indices outside 1..{n}: {out_of_range}")
        if not chosen:
            raise NoTrainingDataError(f"{manifest.name}: no training data (empty index list)")
        return chosen
    if manifest.frame_tags is not None:
        available = [i for i, tag in enumerate(manifest.frame_tags, 1) if tag == 0]
    else:
        available = list(range(1, manifest.temporal_roi[0]))
    if not available:
        raise NoTrainingDataError(f"{manifest.name}: no training data (no object-free frames)")
    return available[:max_frames]


def resize_frame(img: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    if img.shape[:2] == tuple(hw):
        return img
    return cv2.resize(img, (hw[1], hw[0]), interpolation=cv2.INTER_LINEAR)


def resize_mask(mask: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    if mask.shape[:2] == tuple(hw):
        return mask
    return cv2.resize(mask, (hw[1], hw[0]), interpolation=cv2.INTER_NEAREST)


def to_tensor(bgr: np.ndarray) -> np.ndarray:
    rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)
    return rgb.astype(np.float32) / np.float32(255.0)


def preprocess(frame_file, policy: ScalePolicy = ScalePolicy()) -> np.ndarray:
    """Decode a frame into an H x W x 3 float32 RGB array in [0, 1]."""
    bgr = _read_image(Path(frame_file))
    hw = policy.working_hw(*bgr.shape[:2])
    return to_tensor(resize_frame(bgr, hw))


def scale_factor(manifest: SequenceManifest, policy: ScalePolicy) -> tuple[float, float]:
    """native / working ratio per axis, used when upscaling masks for scoring."""
    h, w = manifest.native_size[:2]
    wh, ww = policy.working_hw(h, w)
    return h / wh, w / ww


def iter_frames(
    manifest: SequenceManifest,
    indices: Sequence[int],
    policy: ScalePolicy = ScalePolicy(),
) -> Iterator[tuple[int, np.ndarray]]:
    """Lazily yield ``(index, frame)`` pairs in the given order."""
    for i in indices:
        yield i, preprocess(manifest.frame_path(i), policy)


def load_frames(manifest, indices, policy=ScalePolicy()) -> np.ndarray:
    return np.stack([f for _, f in iter_frames(manifest, indices, policy)])

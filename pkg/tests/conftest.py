from pathlib import Path

import cv2
import numpy as np
import pytest
import torch

torch.set_num_threads(1)


def write_cdnet(root: Path, n_frames: int, temporal_roi=(1, 1), size=(24, 32), n_gt=None, tags=None):
    """Minimal CDnet-layout sequence with random frames."""
    rng = np.random.default_rng(0)
    (root / "input").mkdir(parents=True)
    (root / "groundtruth").mkdir()
    for i in range(1, n_frames + 1):
        cv2.imwrite(str(root / "input" / f"in{i:06d}.jpg"), rng.integers(0, 256, (*size, 3), dtype=np.uint8))
    for i in range(1, (n_frames if n_gt is None else n_gt) + 1):
        cv2.imwrite(str(root / "groundtruth" / f"gt{i:06d}.png"), np.zeros(size, np.uint8))
    (root / "temporalROI.txt").write_text("%d %d\n" % temporal_roi)
    roi = np.zeros(size, np.uint8)
    roi[2:-2, 2:-2] = 255
    cv2.imwrite(str(root / "ROI.bmp"), roi)
    if tags is not None:
        (root / "tags.txt").write_text("".join(f"{t}\n" for t in tags))
    return root


@pytest.fixture
def cdnet_dir(tmp_path):
    return write_cdnet(tmp_path / "seq", 12, temporal_roi=(5, 12))

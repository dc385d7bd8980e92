import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dynbgs.checkpoint import Checkpoint
from dynbgs.errors import DataError, ShapeMismatchError
from dynbgs.label_prep import (
    LabelPrepConfig,
    load_labels,
    make_dynamic_labels,
    residual,
    save_labels,
    threshold_residual,
)
from dynbgs.static_background import build_autoencoder

images = arrays(np.float32, (5, 6, 3), elements=st.floats(0, 1, width=32))


def scalar_channel_max(I, B):
    h, w, c = I.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = max(abs(float(I[y, x, k]) - float(B[y, x, k])) for k in range(c))
    return out


def test_residual_examples():
    I = np.zeros((1, 1, 3), np.float32)
    B = np.array([[[0.1, 0.5, 0.2]]], np.float32)
    assert residual(I, B)[0, 0] == np.float32(0.5)
    assert scalar_channel_max(I, B)[0, 0] == pytest.approx(0.5)
    assert not residual(B, B).any()
    assert residual(I, B, "mean")[0, 0] == pytest.approx(0.8 / 3)
    with pytest.raises(ShapeMismatchError):
        residual(I, np.zeros((1, 2, 3)))


@settings(max_examples=50, deadline=None)
@given(I=images, B=images)
def test_residual_properties(I, B):
    r = residual(I, B)
    np.testing.assert_array_equal(r, residual(B, I))
    assert r.min() >= 0 and r.max() <= 1
    np.testing.assert_allclose(r, scalar_channel_max(I, B), atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(
    r=arrays(np.float32, (6, 6), elements=st.floats(0, 1, width=32)),
    lo=st.floats(0.001, 0.998),
    step=st.floats(0.0, 0.5),
)
def test_labels_nested_across_thresholds(r, lo, step):
    hi = min(lo + step, 0.999)
    low = threshold_residual(r, lo)
    high = threshold_residual(r, hi)
    assert (high <= low).all()


def test_thresholding_is_strict():
    r = np.full((3, 3), 0.01, np.float32)
    r[1, 1] = 0.5
    r[0, 0] = 0.1  # a tie stays background
    labels = threshold_residual(r, 0.1)
    assert labels.sum() == 1 and labels[1, 1] == 1
    assert not threshold_residual(np.minimum(r, 0.9), 0.999).any()


class _Identity(Checkpoint):
    """An autoencoder stand-in that reproduces its input exactly."""

    def __init__(self, size):
        model = build_autoencoder(size)
        super().__init__("autoencoder", {k: v.detach().numpy() for k, v in model.state_dict().items()},
                         model.spec(), size)

    def model(self):
        return lambda x: x


def test_perfect_reconstruction_gives_empty_labels():
    frames = np.random.default_rng(0).random((4, 5, 6, 3), dtype=np.float32)
    labels = make_dynamic_labels(frames, _Identity((5, 6, 3)))
    assert len(labels) == 4
    assert all(not m.any() for m in labels)


def test_labels_are_reproducible():
    frames = np.random.default_rng(1).random((3, 4, 4, 3), dtype=np.float32)
    model = build_autoencoder((4, 4, 3))
    ckpt = Checkpoint.from_module("autoencoder", model, model.spec(), (4, 4, 3))
    cfg = LabelPrepConfig(0.3)
    a = make_dynamic_labels(frames, ckpt, cfg)
    b = make_dynamic_labels(frames, Checkpoint.from_module("autoencoder", model, model.spec(), (4, 4, 3)), cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert set(np.unique(np.stack(a))) <= {0, 1}


def test_empty_stream():
    with pytest.raises(DataError):
        make_dynamic_labels([], _Identity((2, 2, 3)))


def test_config_bounds():
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            LabelPrepConfig(bad)
    with pytest.raises(ValueError):
        LabelPrepConfig(0.1, "median")


def test_label_files_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    masks = [rng.integers(0, 2, (7, 9)).astype(np.uint8) for _ in range(3)]
    paths = save_labels(masks, tmp_path / "labels", [4, 5, 6])
    assert [p.name for p in paths] == ["dbg000004.png", "dbg000005.png", "dbg000006.png"]
    import cv2

    raw = cv2.imread(str(paths[0]), cv2.IMREAD_UNCHANGED)
    assert raw.dtype == np.uint8 and raw.ndim == 2 and set(np.unique(raw)) <= {0, 255}
    back = load_labels(tmp_path / "labels", [4, 5, 6])
    assert all(np.array_equal(a, b) for a, b in zip(masks, back))

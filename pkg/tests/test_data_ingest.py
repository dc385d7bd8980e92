import cv2
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynbgs.data_ingest import (
    ScalePolicy,
    SequenceManifest,
    load_cdnet_sequence,
    load_i2r_sequence,
    preprocess,
    select_training_frames,
)
from dynbgs.errors import DataError, DatasetLayoutError, NoTrainingDataError

from conftest import write_cdnet


def test_cdnet_manifest_fields(tmp_path):
    # A full-length CDnet fixture is mostly empty files; only counts matter here.
    root = write_cdnet(tmp_path / "fall", 1189, temporal_roi=(470, 1189), size=(8, 8))
    m = load_cdnet_sequence(root)
    assert m.name == "fall"
    assert len(m) == 1189
    assert m.temporal_roi == (470, 1189)
    assert m.frame_paths[0].name == "in000001.jpg"
    assert m.frame_paths[-1].name == "in001189.jpg"
    assert m.gt_paths[469].name == "gt000470.png"
    assert set(np.unique(m.roi_mask)) == {0, 1}
    assert m.native_size == (8, 8, 3)


def test_cdnet_singleton(tmp_path):
    m = load_cdnet_sequence(write_cdnet(tmp_path / "one", 1, temporal_roi=(1, 1)))
    assert len(m) == 1 and m.temporal_roi == (1, 1)


def test_cdnet_empty_input(tmp_path):
    root = write_cdnet(tmp_path / "empty", 0, temporal_roi=(1, 1))
    with pytest.raises(DatasetLayoutError, match="input frames"):
        load_cdnet_sequence(root)


@pytest.mark.parametrize("piece", ["temporalROI.txt", "ROI.bmp"])
def test_cdnet_missing_file_is_named(tmp_path, piece):
    root = write_cdnet(tmp_path / "s", 3, temporal_roi=(1, 3))
    (root / piece).unlink()
    with pytest.raises(DatasetLayoutError, match=piece):
        load_cdnet_sequence(root)


def test_cdnet_missing_dir(tmp_path):
    with pytest.raises(DatasetLayoutError):
        load_cdnet_sequence(tmp_path / "nope")


def test_cdnet_gt_count_mismatch(tmp_path):
    root = write_cdnet(tmp_path / "s", 5, temporal_roi=(1, 5), n_gt=4)
    with pytest.raises(DataError, match="ground-truth"):
        load_cdnet_sequence(root)


def test_cdnet_reload_is_identical(cdnet_dir):
    a = load_cdnet_sequence(cdnet_dir)
    b = load_cdnet_sequence(cdnet_dir)
    assert a == b
    idx = [int(p.stem[2:]) for p in a.frame_paths]
    assert idx == sorted(idx) and len(set(idx)) == len(idx)


def test_manifest_invariants():
    with pytest.raises(DataError):
        SequenceManifest("x", [])
    with pytest.raises(DataError):
        SequenceManifest("x", ["a", "b"], temporal_roi=(2, 3))
    with pytest.raises(DataError):
        SequenceManifest("x", ["a", "b"], frame_tags=[0, 2], temporal_roi=(1, 2))
    with pytest.raises(DataError):
        SequenceManifest("x", ["a", "b"], gt_paths=["g"], temporal_roi=(1, 2))


def _i2r_dir(tmp_path, n=20):
    root = tmp_path / "Campus"
    root.mkdir()
    for i in range(1, n + 1):
        cv2.imwrite(str(root / f"trained{i:04d}.bmp"), np.zeros((8, 8, 3), np.uint8))
    (root / "gt").mkdir()
    for i in (7, 15):
        cv2.imwrite(str(root / "gt" / f"gt_{i}.bmp"), np.zeros((8, 8), np.uint8))
    return root


def test_i2r_sparse_ground_truth(tmp_path):
    root = _i2r_dir(tmp_path)
    gmap = tmp_path / "map.txt"
    gmap.write_text("7 gt/gt_7.bmp\n15 gt/gt_15.bmp\n")
    m = load_i2r_sequence(root, gmap)
    assert len(m) == 20
    assert m.temporal_roi == (1, 20)
    assert m.eval_indices() == [7, 15]
    assert sum(p is not None for p in m.gt_paths) == 2


def test_i2r_without_map_has_no_ground_truth(tmp_path):
    m = load_i2r_sequence(_i2r_dir(tmp_path))
    assert not m.has_ground_truth
    assert m.eval_indices() == []


def test_i2r_out_of_bounds_entry(tmp_path):
    root = _i2r_dir(tmp_path)
    gmap = tmp_path / "map.txt"
    gmap.write_text("7 gt/gt_7.bmp\n999 gt/gt_999.bmp\nbogus\n")
    with pytest.raises(DataError) as exc:
        load_i2r_sequence(root, gmap)
    assert "999" in str(exc.value) and "bogus" in str(exc.value)


def _manifest(n, roi, tags=None):
    return SequenceManifest("m", [f"f{i}" for i in range(n)], temporal_roi=roi, frame_tags=tags)


def test_select_before_temporal_roi():
    m = _manifest(1189, (470, 1189))
    # enumerate the rule directly: every index below the ROI start, earliest first
    expected = [i for i in range(1, 1190) if i < 470][:300]
    assert select_training_frames(m, 300) == expected == list(range(1, 301))


def test_select_fewer_than_max():
    assert select_training_frames(_manifest(50, (5, 50))) == [1, 2, 3, 4]


def test_select_explicit_indices_win():
    m = _manifest(3000, (1, 3000))
    assert select_training_frames(m, explicit_indices=range(2001, 2011)) == list(range(2001, 2011))


def test_select_tags():
    tags = [1, 0, 0, 1, 0, 1]
    assert select_training_frames(_manifest(6, (1, 6), tags)) == [2, 3, 5]
    assert select_training_frames(_manifest(6, (1, 6), tags), max_frames=2) == [2, 3]


def test_select_no_training_data():
    with pytest.raises(NoTrainingDataError, match="no training data"):
        select_training_frames(_manifest(5, (1, 5)))
    with pytest.raises(NoTrainingDataError):
        select_training_frames(_manifest(3, (2, 3), [1, 1, 1]))


@given(first=st.integers(1, 60), max_frames=st.integers(1, 400))
def test_select_never_reaches_temporal_roi(first, max_frames):
    idx = select_training_frames(_manifest(60, (first, 60)), max_frames) if first > 1 else []
    assert all(i < first for i in idx)
    assert idx == sorted(idx)


def test_scale_policy_arithmetic():
    assert ScalePolicy(320).working_hw(480, 720) == (213, 320)
    assert ScalePolicy(320).working_hw(64, 64) == (64, 64)
    assert ScalePolicy(320).working_hw(240, 320) == (240, 320)
    assert ScalePolicy(320).working_hw(10, 2000) == (16, 320)
    assert ScalePolicy(None).working_hw(4000, 3000) == (4000, 3000)


def test_preprocess_downscale(tmp_path):
    p = tmp_path / "big.png"
    cv2.imwrite(str(p), np.full((480, 720, 3), 128, np.uint8))
    out = preprocess(p, ScalePolicy(320))
    assert out.shape == (213, 320, 3)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, 128 / 255, atol=1e-6)


def test_preprocess_small_and_black(tmp_path):
    p = tmp_path / "black.png"
    cv2.imwrite(str(p), np.zeros((64, 64, 3), np.uint8))
    out = preprocess(p)
    assert out.shape == (64, 64, 3)
    assert not out.any()


def test_preprocess_is_rgb(tmp_path):
    p = tmp_path / "red.png"
    bgr = np.zeros((4, 4, 3), np.uint8)
    bgr[..., 2] = 255
    cv2.imwrite(str(p), bgr)
    out = preprocess(p)
    assert (out[..., 0] == 1).all() and not out[..., 1:].any()


def test_preprocess_undecodable(tmp_path):
    p = tmp_path / "junk.jpg"
    p.write_bytes(b"not an image")
    with pytest.raises(DataError, match="junk.jpg"):
        preprocess(p)


@settings(max_examples=30, deadline=None)
@given(
    h=st.integers(1, 400), w=st.integers(1, 400), seed=st.integers(0, 2**16),
)
def test_preprocess_output_is_valid_tensor(tmp_path_factory, h, w, seed):
    p = tmp_path_factory.mktemp("img") / "x.png"
    img = np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)
    cv2.imwrite(str(p), img)
    out = preprocess(p, ScalePolicy(320))
    assert out.shape == (*ScalePolicy(320).working_hw(h, w), 3)
    assert np.isfinite(out).all() and out.min() >= 0 and out.max() <= 1

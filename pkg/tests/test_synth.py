import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynbgs.data_ingest import load_cdnet_sequence, preprocess, read_mask, ScalePolicy
from dynbgs.synth import SynthSceneSpec, export_cdnet, generate_scene, temporal_std_ratio

SMALL = SynthSceneSpec(n_train=10, n_test=8)


def test_static_texture_gives_empty_dynamic_masks():
    spec = dataclasses.replace(SMALL, dynamic_noise=0.0, stripe_speed=0.0)
    scene = generate_scene(spec)
    assert not scene.gt_dynamic_masks.any()


def test_object_mask_area_and_disjoint_from_dynamic():
    scene = generate_scene(SMALL)
    assert not scene.gt_object_masks[: SMALL.n_train].any()
    test_obj = scene.gt_object_masks[SMALL.n_train:]
    assert (test_obj.reshape(len(test_obj), -1).sum(1) == 64).all()
    assert not (scene.gt_object_masks & scene.gt_dynamic_masks).any()


def test_object_follows_its_trajectory():
    scene = generate_scene(SMALL)
    for t in range(SMALL.n_test):
        r, c = SMALL.object_position(t)
        m = scene.gt_object_masks[SMALL.n_train + t]
        rows, cols = np.nonzero(m)
        assert (rows.min(), cols.min()) == (r, c)
        assert np.abs(scene.test_frames[t][m > 0] - SMALL.object_color).max() <= SMALL.sensor_noise + 1e-6


def test_generation_is_deterministic():
    a, b = generate_scene(SMALL), generate_scene(SMALL)
    np.testing.assert_array_equal(a.train_frames, b.train_frames)
    np.testing.assert_array_equal(a.test_frames, b.test_frames)
    c = generate_scene(dataclasses.replace(SMALL, seed=1))
    assert not np.array_equal(a.train_frames, c.train_frames)


@pytest.mark.parametrize("change", [
    {"object_velocity": (0.5, 10.0)},
    {"object_start": (-1.0, 0.0)},
    {"dynamic_region": (50, 0, 24, 64)},
    {"object_side": 0},
])
def test_invalid_specs_raise(change):
    with pytest.raises(ValueError):
        dataclasses.replace(SMALL, **change)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_dynamic_region_is_much_noisier(seed):
    spec = dataclasses.replace(SMALL, n_train=40, seed=seed)
    assert temporal_std_ratio(generate_scene(spec), spec) >= 3.0


def test_export_round_trips_through_loader(tmp_path):
    scene = generate_scene(SMALL)
    root = export_cdnet(scene, SMALL, tmp_path / "seq")
    m = load_cdnet_sequence(root)
    assert m.temporal_roi == (SMALL.n_train + 1, SMALL.n_train + SMALL.n_test)
    assert len(m) == SMALL.n_train + SMALL.n_test
    assert m.native_size == (64, 64, 3)
    i = SMALL.n_train + 3
    np.testing.assert_array_equal(read_mask(m.gt_path(i)) > 0, scene.gt_object_masks[i - 1] > 0)
    frame = preprocess(m.frame_path(i), ScalePolicy())
    # JPEG loss only: small on the smooth plate, larger on the noisy band
    err = np.abs(frame - scene.test_frames[2]).mean(-1)
    assert err[:32].mean() < 0.02 and err.mean() < 0.05


def test_export_requires_test_frames(tmp_path):
    spec = dataclasses.replace(SMALL, n_test=0)
    with pytest.raises(ValueError):
        export_cdnet(generate_scene(spec), spec, tmp_path / "seq")

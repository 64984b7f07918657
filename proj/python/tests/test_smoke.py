import numpy as np
import pytest

import blurvid


def tiny_model(frames=3):
    m = blurvid.ModelConfig()
    m.frames = frames
    m.height = m.width = 32
    m.base_channels = 1
    m.dm_base = 4
    m.dm_growth = 4
    m.dm_rdb_layers = 2
    m.dm_rdbs_per_level = 1
    return m


def test_desk_config_counts():
    counts = dict(blurvid.parameter_counts(blurvid.ModelConfig.desk()))
    assert set(counts) == {"rve", "rvd", "bie", "dm"}
    assert all(n > 0 for n in counts.values())


def test_synth_pair_is_mean_of_frames():
    (pair,) = blurvid.synth_dataset(1, frames=5, size=32, seed=3)
    frames = np.stack(pair.frames)
    assert pair.blurred.shape == (1, 3, 32, 32)
    np.testing.assert_allclose(pair.blurred, frames.mean(axis=0), atol=1e-6)
    assert '"sprites"' in pair.scene


def test_zero_flow_warp_is_identity():
    rng = np.random.default_rng(0)
    img = rng.random((1, 3, 8, 8), dtype=np.float32)
    out = blurvid.warp(img, np.zeros((1, 2, 8, 8), np.float32))
    assert np.array_equal(out, img)


def test_integer_shift_matches_roll():
    rng = np.random.default_rng(1)
    img = rng.random((1, 3, 8, 8), dtype=np.float32)
    flow = np.zeros((1, 2, 8, 8), np.float32)
    flow[0, 0] = 1.0  # sample one pixel to the right
    out = blurvid.warp(img, flow)
    np.testing.assert_array_equal(out[..., :-1], img[..., 1:])


def test_order_invariant_loss_ignores_reversal():
    rng = np.random.default_rng(2)
    gt = [rng.random((1, 3, 8, 8), dtype=np.float32) for _ in range(5)]
    pred = [rng.random((1, 3, 8, 8), dtype=np.float32) for _ in range(5)]
    assert blurvid.order_invariant_loss(gt[::-1], gt) == pytest.approx(0.0, abs=1e-6)
    assert blurvid.order_invariant_loss(pred, gt) == pytest.approx(
        blurvid.order_invariant_loss(pred[::-1], gt), abs=1e-6
    )


def test_psnr_known_value():
    a = np.full((1, 1, 4, 4), 0.5, np.float32)
    assert blurvid.psnr(a, a + np.float32(0.1)) == pytest.approx(20.0, abs=1e-3)


def test_shape_errors_surface_as_value_error():
    with pytest.raises(ValueError):
        blurvid.warp(np.zeros((1, 3, 8, 8), np.float32), np.zeros((1, 2, 4, 4), np.float32))


def test_training_round_trip(tmp_path):
    pairs = blurvid.synth_dataset(2, frames=3, size=32, seed=4)
    model = tiny_model()

    cfg = blurvid.TrainConfig("autoencoder")
    cfg.iterations, cfg.batch = 2, 1
    ae = blurvid.train_autoencoder(cfg, model, pairs)
    assert len(ae.losses) == 2 and all(np.isfinite(ae.losses))

    cfg = blurvid.TrainConfig("bie")
    cfg.iterations, cfg.batch = 2, 2
    bie = blurvid.train_bie(cfg, ae.state, pairs)
    assert bie.state.stage == "bie"

    cfg = blurvid.TrainConfig("dm")
    cfg.iterations, cfg.batch = 2, 1
    dm = blurvid.train_dm(cfg, model, pairs)

    bie.state.save(tmp_path / "bie.ckpt")
    dm.state.save(tmp_path / "dm.ckpt")
    assert blurvid.load_checkpoint(tmp_path / "bie.ckpt").to_bytes() == bie.state.to_bytes()

    center, frames = blurvid.infer(tmp_path / "bie.ckpt", tmp_path / "dm.ckpt", pairs[0].blurred)
    assert center.shape == (1, 3, 32, 32)
    assert len(frames) == 3
    assert 0.0 <= center.min() and center.max() <= 1.0
    again = blurvid.infer(tmp_path / "bie.ckpt", tmp_path / "dm.ckpt", pairs[0].blurred)
    assert all(np.array_equal(a, b) for a, b in zip(frames, again[1]))


def test_gradcheck_subset_passes():
    rows = blurvid.gradcheck(seeds=2, filter="op/")
    assert rows and all(r["passed"] for r in rows)

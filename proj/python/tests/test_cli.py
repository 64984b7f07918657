"""Drives the `blurvid` executable end to end on a tiny dataset."""

import os
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("BLURVID_CLI")
pytestmark = pytest.mark.skipif(not CLI, reason="BLURVID_CLI not set")

SMALL_AE = ["--base-channels", "1"]
SMALL_DM = ["--dm-base", "4", "--dm-growth", "4", "--dm-rdb-layers", "2", "--dm-rdbs", "1"]


def run(*args, env=None, check=None):
    full_env = dict(os.environ, **(env or {}))
    proc = subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, env=full_env)
    if check is not None:
        assert proc.returncode == check, proc.stdout + proc.stderr
    return proc


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "ds"
    run("synth", "--count", 2, "--frames", 3, "--size", 32, "--seed", 5, "--out", out, check=0)
    return out


def test_no_subcommand_is_usage_error():
    assert run().returncode == 1


def test_unknown_flag_is_usage_error():
    assert run("synth", "--bogus").returncode == 1


def test_bad_thread_env_is_usage_error(tmp_path):
    proc = run("synth", "--out", tmp_path / "x", env={"MUL_THREADS": "zero"})
    assert proc.returncode == 1
    assert "MUL_THREADS" in proc.stderr


def test_size_must_divide_by_16(tmp_path):
    assert run("synth", "--size", 40, "--out", tmp_path / "x").returncode == 1


def test_synth_prints_config_and_writes_manifest(dataset):
    assert (dataset / "manifest.json").exists()
    assert sorted(p.name for p in dataset.iterdir() if p.is_dir()) == ["seq_00000", "seq_00001"]


def test_missing_dataset_is_runtime_failure(tmp_path):
    proc = run("train-dm", "--dataset", tmp_path / "nothing", "--out", tmp_path / "dm.ckpt", "--iterations", 1)
    assert proc.returncode == 2


def test_ae_flags_rejected_for_dm(dataset, tmp_path):
    proc = run("train-dm", "--dataset", dataset, "--out", tmp_path / "dm.ckpt", *SMALL_AE)
    assert proc.returncode == 1


def test_params_lists_networks():
    proc = run("params", check=0)
    assert "# config (params)" in proc.stdout
    for name in ("rve", "rvd", "bie", "dm"):
        assert name in proc.stdout


def test_train_infer_eval(dataset, tmp_path):
    ae, bie, dm = tmp_path / "ae.ckpt", tmp_path / "bie.ckpt", tmp_path / "dm.ckpt"
    common = ["--dataset", dataset, "--iterations", 2, "--batch", 2]
    proc = run("train-ae", *common, "--out", ae, *SMALL_AE, check=0)
    assert "# config (train-ae)" in proc.stdout
    run("train-bie", *common, "--stage1", ae, "--out", bie, check=0)
    run("train-dm", *common, "--out", dm, *SMALL_DM, check=0)

    blurred = dataset / "seq_00000" / "blur.png"
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    run("infer", "--blurred", blurred, "--bie", bie, "--dm", dm, "--out", out1, check=0)
    run("infer", "--blurred", blurred, "--bie", bie, "--dm", dm, "--out", out2, check=0)
    names = sorted(p.name for p in out1.iterdir())
    assert names == ["deblurred.png", "frame_00.png", "frame_01.png", "frame_02.png"]
    for name in names:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    proc = run("eval", "--dataset", dataset, "--bie", bie, "--dm", dm, check=0)
    assert "order_invariant_error" in proc.stdout
    assert "dm_psnr_db" in proc.stdout


def test_wrong_stage_checkpoint_is_runtime_failure(dataset, tmp_path):
    dm = tmp_path / "dm.ckpt"
    run("train-dm", "--dataset", dataset, "--iterations", 1, "--batch", 1, "--out", dm, *SMALL_DM, check=0)
    blurred = dataset / "seq_00000" / "blur.png"
    proc = run("infer", "--blurred", blurred, "--bie", dm, "--dm", dm, "--out", tmp_path / "o")
    assert proc.returncode == 2
    assert "expected bie" in proc.stderr


def test_gradcheck_filtered(tmp_path):
    proc = run("gradcheck", "--seeds", 2, "--filter", "op/", check=0)
    assert "PASS" in proc.stdout and "FAIL" not in proc.stdout

# -*- coding: utf-8 -*-
"""
End-to-end tests of the command-line entry points on a tiny dataset.
"""

import logging

import numpy as np
import pandas as pd
import pytest

import main
from src.training.checkpoint import load_checkpoint
from src.utils.image_io import read_png

TINY_RUN = """\
# small enough for a unit test
iterations = 0
rays_per_batch = 16
num_samples = 8
num_points = 3
embedding_dim = 4
kernel_hidden = 16
kernel_depth = 2
field_width = 16
field_depth = 2
position_freqs = 3
direction_freqs = 1
log_every = 1
"""


@pytest.fixture(autouse=True)
def restore_logging():
    """main() replaces the root handlers; put the originals back afterwards."""
    root = logging.getLogger()
    saved_handlers, saved_level = root.handlers[:], root.level
    yield
    for handler in root.handlers[:]:
        if handler not in saved_handlers:
            root.removeHandler(handler)
            handler.close()
    for handler in saved_handlers:
        if handler not in root.handlers:
            root.addHandler(handler)
    root.setLevel(saved_level)


@pytest.fixture
def dataset_dir(tmp_path):
    out = tmp_path / "data"
    status = main.main(["synth", "--scene", "single", "--blur", "motion", "--views", "2", "--test-views", "1",
                        "--res", "12x12", "--seed", "1", "--out", str(out)])
    assert status == 0
    return out


@pytest.fixture
def run_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_RUN)
    return path


class TestSynth:

    def test_writes_a_dataset(self, capsys, dataset_dir):
        assert (dataset_dir / "train" / "001.png").is_file()
        assert (dataset_dir / "test_sharp" / "000.png").is_file()
        assert "blur_type = motion" in (dataset_dir / "meta.txt").read_text()
        assert "✅" in capsys.readouterr().out

    def test_same_seed_same_files(self, tmp_path, dataset_dir):
        again = tmp_path / "again"
        main.main(["synth", "--scene", "single", "--blur", "motion", "--views", "2", "--test-views", "1",
                   "--res", "12x12", "--seed", "1", "--out", str(again)])
        for name in ("poses_train.txt", "intrinsics.txt", "meta.txt"):
            assert (again / name).read_text() == (dataset_dir / name).read_text()
        assert (again / "train" / "000.png").read_bytes() == (dataset_dir / "train" / "000.png").read_bytes()

    def test_refuses_to_overwrite(self, dataset_dir, capsys):
        status = main.main(["synth", "--scene", "single", "--views", "1", "--test-views", "0",
                            "--res", "12x12", "--out", str(dataset_dir)])
        assert status == 1
        assert "❌ Error:" in capsys.readouterr().out
        assert (dataset_dir / "train" / "001.png").is_file()

    def test_malformed_resolution(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main.main(["synth", "--res", "twelve", "--out", str(tmp_path / "x")])
        assert excinfo.value.code != 0

    def test_writes_a_log_file(self, dataset_dir, tmp_path):
        logs = list((tmp_path / "logs").glob("synth_*.log"))
        assert logs
        assert "LOG SUMMARY" in logs[0].read_text()


class TestTrainRenderEval:

    def test_help_mentions_zero_step_checkpoints(self, capsys):
        for command in ("train", "render"):
            with pytest.raises(SystemExit) as exit_info:
                main.main([command, "--help"])
            assert exit_info.value.code == 0
        text = " ".join(capsys.readouterr().out.split())
        assert "0 saves the seeded random initialization" in text
        assert "0 iterations renders the untrained random field" in text

    def test_zero_step_checkpoint_renders_deterministically(self, tmp_path, dataset_dir, run_file):
        run = tmp_path / "run"
        assert main.main(["train", "--data", str(dataset_dir), "--config", str(run_file), "--out", str(run)]) == 0
        checkpoint = load_checkpoint(run / "checkpoint.ckpt")
        assert checkpoint.iteration == 0

        poses = dataset_dir / "poses_test.txt"
        for name in ("a", "b"):
            assert main.main(["render", "--ckpt", str(run / "checkpoint.ckpt"), "--poses", str(poses),
                              "--out", str(tmp_path / name)]) == 0
        first, second = read_png(tmp_path / "a" / "000.png"), read_png(tmp_path / "b" / "000.png")
        assert first.shape == (12, 12, 3)
        np.testing.assert_array_equal(first, second)

    def test_train_render_eval(self, tmp_path, dataset_dir, run_file, capsys):
        run = tmp_path / "run"
        status = main.main(["train", "--data", str(dataset_dir), "--config", str(run_file),
                            "--iterations", "3", "--seed", "2", "--out", str(run)])
        assert status == 0
        log = pd.read_csv(run / "loss.csv")
        assert list(log.columns) == ["iteration", "loss", "rec", "align", "lr"]
        assert len(log) == 3
        assert (run / "loss_curve.png").is_file()

        status = main.main(["render", "--ckpt", str(run / "checkpoint.ckpt"),
                            "--poses", str(dataset_dir / "poses_test.txt"), "--steps", "8",
                            "--out", str(tmp_path / "renders")])
        assert status == 0
        capsys.readouterr()

        csv_path = tmp_path / "metrics.csv"
        status = main.main(["eval", "--pred", str(tmp_path / "renders"), "--gt", str(dataset_dir / "test_sharp"),
                            "--csv", str(csv_path)])
        assert status == 0
        printed = capsys.readouterr().out
        assert printed.splitlines()[0] == "image,psnr,ssim"
        table = pd.read_csv(csv_path)
        assert list(table["image"]) == ["000.png", "mean"]
        assert 0.0 <= table["psnr"].iloc[0] <= 99.0

    def test_resume_continues_the_run(self, tmp_path, dataset_dir, run_file):
        run = tmp_path / "run"
        main.main(["train", "--data", str(dataset_dir), "--config", str(run_file),
                   "--iterations", "2", "--out", str(run)])
        status = main.main(["train", "--data", str(dataset_dir), "--config", str(run_file),
                            "--iterations", "4", "--resume", "--out", str(run)])
        assert status == 0
        assert load_checkpoint(run / "checkpoint.ckpt").iteration == 4
        assert list(pd.read_csv(run / "loss.csv")["iteration"]) == [0, 1, 2, 3]

    def test_baseline_flag(self, tmp_path, dataset_dir, run_file):
        run = tmp_path / "run"
        assert main.main(["train", "--data", str(dataset_dir), "--config", str(run_file), "--no-dsk",
                          "--iterations", "1", "--out", str(run)]) == 0
        checkpoint = load_checkpoint(run / "checkpoint.ckpt")
        assert checkpoint.config["dsk_enabled"] is False
        assert not any(name.startswith("dsk.") for name in checkpoint.tensors)

    def test_eval_identical_directories(self, dataset_dir, capsys):
        gt = str(dataset_dir / "test_sharp")
        assert main.main(["eval", "--pred", gt, "--gt", gt]) == 0
        rows = capsys.readouterr().out.splitlines()
        assert rows[1].startswith("000.png,99.000000,1.000000")

    def test_missing_inputs_fail_cleanly(self, tmp_path, capsys):
        assert main.main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "run")]) == 1
        assert main.main(["render", "--ckpt", str(tmp_path / "none.ckpt"), "--poses", str(tmp_path / "p.txt"),
                          "--out", str(tmp_path / "r")]) == 1
        assert main.main(["eval", "--pred", str(tmp_path / "a"), "--gt", str(tmp_path / "b")]) == 1
        assert capsys.readouterr().out.count("❌ Error:") == 3


class TestKernelViz:

    def test_draws_a_kernel_plot(self, tmp_path, dataset_dir, run_file):
        run = tmp_path / "run"
        main.main(["train", "--data", str(dataset_dir), "--config", str(run_file), "--out", str(run)])
        out = tmp_path / "kernel.png"
        status = main.main(["kernel-viz", "--ckpt", str(run / "checkpoint.ckpt"), "--view", "1", "--grid", "3",
                            "--data", str(dataset_dir), "--out", str(out)])
        assert status == 0
        assert out.stat().st_size > 0

    def test_bad_view_and_kernel_free_checkpoint(self, tmp_path, dataset_dir, run_file, capsys):
        run = tmp_path / "run"
        main.main(["train", "--data", str(dataset_dir), "--config", str(run_file), "--out", str(run)])
        assert main.main(["kernel-viz", "--ckpt", str(run / "checkpoint.ckpt"), "--view", "5",
                          "--out", str(tmp_path / "k.png")]) == 1
        baseline = tmp_path / "baseline"
        main.main(["train", "--data", str(dataset_dir), "--config", str(run_file), "--no-dsk", "--out", str(baseline)])
        assert main.main(["kernel-viz", "--ckpt", str(baseline / "checkpoint.ckpt"), "--view", "0",
                          "--out", str(tmp_path / "k.png")]) == 1
        assert not (tmp_path / "k.png").exists()

# -*- coding: utf-8 -*-
"""
Tests for the training configuration, the optimization loop, checkpoint
resumption and the end-to-end deblurring behavior.

The end-to-end classes are marked slow and run only with DEBLUR_NERF_RUN_SLOW=1.
"""

import dataclasses
import json
import logging

import numpy as np
import pandas as pd
import pytest

from src import autodiff as ad
from src.autodiff import precision
from src.data.synth import DefocusBlurSpec, MotionBlurSpec, synthesize_dataset
from src.errors import CheckpointError, ConfigError
from src.nerf.blur_model import gamma_correct, gamma_encode
from src.nerf.dsk import eval_kernel
from src.nerf.renderer import rays_from_pixels, render_image, render_ray
from src.training.checkpoint import load_checkpoint
from src.training.trainer import (
    CHECKPOINT_NAME,
    LOSS_COLUMNS,
    LOSS_CURVE_NAME,
    LOSS_LOG_NAME,
    TrainConfig,
    Trainer,
    dsk_from_checkpoint,
    field_from_checkpoint,
    intrinsics_from_checkpoint,
    load_train_config,
    lr_at,
)
from src.utils.metrics import psnr, ssim


def _state(trainer):
    return {name: tensor.data.copy() for name, tensor in trainer.named_tensors()}


def _base_render(trainer, views, p):
    cameras = trainer.cameras.select(views)
    ray = rays_from_pixels(cameras.rotations, cameras.centers, trainer.intrinsics, p)
    return gamma_correct(render_ray(trainer.field, ray, trainer.near, trainer.far, trainer.config.num_samples))


def _random_pixels(trainer, count, seed):
    rng = np.random.default_rng(seed)
    views = rng.integers(0, trainer.targets.shape[0], size=count)
    p = rng.uniform(0, [trainer.intrinsics.width, trainer.intrinsics.height], size=(count, 2))
    return views, p


class TestTrainConfig:

    def test_defaults(self):
        config = TrainConfig()
        assert (config.iterations, config.rays_per_batch, config.num_points, config.num_samples) == (20000, 256, 5, 48)
        assert (config.lr_start, config.lr_end) == (5e-4, 8e-5)
        assert config.loss_weights.lambda_o == 10.0
        assert config.loss_weights.lambda_a == 0.1

    def test_invariants(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr_start=1e-5, lr_end=1e-4)
        with pytest.raises(ConfigError):
            TrainConfig(lr_end=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(rays_per_batch=0)
        with pytest.raises(ConfigError):
            TrainConfig(num_points=0)

    def test_from_text_values(self):
        config = TrainConfig.from_mapping({"iterations": "1e3", "stratified": "no", "lambda_a": "0.5",
                                           "num_points": "3"})
        assert config.iterations == 1000
        assert config.stratified is False
        assert config.lambda_a == 0.5
        assert config.num_points == 3

    def test_unknown_and_invalid_values_warn(self, caplog):
        with caplog.at_level(logging.WARNING):
            config = TrainConfig.from_mapping({"colour": "red", "seed": "many", "dsk_enabled": "maybe"})
        assert config.seed == 0
        assert config.dsk_enabled is True
        assert "colour" in caplog.text
        assert "seed" in caplog.text

    def test_invalid_combination_raises(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_mapping({"lr_start": "1e-5"})

    def test_precedence(self, tmp_path, monkeypatch):
        json_path = tmp_path / "config.json"
        json_path.write_text(json.dumps({"train": {"seed": 3, "iterations": 50}, "dsk": {"num_points": 7}}))
        monkeypatch.setenv("DEBLUR_NERF_CONFIG", str(json_path))
        run_file = tmp_path / "run.cfg"
        run_file.write_text("# run options\nseed = 4\nrays_per_batch = 32\n")

        from_json = load_train_config()
        assert (from_json.seed, from_json.iterations, from_json.num_points) == (3, 50, 7)
        from_file = load_train_config(run_file)
        assert (from_file.seed, from_file.iterations, from_file.rays_per_batch) == (4, 50, 32)
        overridden = load_train_config(run_file, {"seed": 9, "dsk_enabled": False})
        assert (overridden.seed, overridden.rays_per_batch, overridden.dsk_enabled) == (9, 32, False)

    def test_round_trip_through_dict(self):
        config = TrainConfig(iterations=12, dsk_enabled=False, r_deform=2.5)
        assert TrainConfig.from_mapping(config.to_dict()) == config


class TestSchedule:

    def test_lr_at(self):
        config = TrainConfig()
        assert lr_at(0, config) == pytest.approx(5e-4)
        assert lr_at(20000, config) == pytest.approx(8e-5)
        assert lr_at(10000, config) == pytest.approx(2e-4)


class TestIdentityAtInit:

    def test_single_point_kernel_matches_the_base_ray(self, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, dataclasses.replace(tiny_config, num_points=1))
        views, p = _random_pixels(trainer, 1000, seed=1)
        with ad.no_grad():
            predicted, align = trainer.predict(views, p)
            expected = _base_render(trainer, views, p)
        np.testing.assert_allclose(predicted.data, expected.data, atol=1e-6)
        assert align.item() == 0.0

    def test_collapsed_kernel_matches_the_base_ray(self, tiny_dataset, tiny_config):
        with precision(np.float64):
            trainer = Trainer(tiny_dataset, tiny_config)
            trainer.dsk.canonical.points[:] = 0.0
            views, p = _random_pixels(trainer, 1000, seed=2)
            with ad.no_grad():
                predicted, _ = trainer.predict(views, p)
                expected = _base_render(trainer, views, p)
        np.testing.assert_allclose(predicted.data, expected.data, atol=1e-6)

    def test_anchor_ray_is_the_pixel_ray(self, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, tiny_config)
        views, p = _random_pixels(trainer, 50, seed=3)
        with ad.no_grad():
            _, align = trainer.predict(views, p)
        assert align.item() == 0.0


class TestTraining:

    def test_steps_are_finite_and_move_every_tensor(self, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, tiny_config)
        before = _state(trainer)
        for _ in range(3):
            result = trainer.train_step()
            assert np.isfinite(result.loss) and result.loss >= 0
            assert result.loss == pytest.approx(result.rec + tiny_config.lambda_a * result.align, rel=1e-5)
        after = _state(trainer)
        assert trainer.iteration == 3
        assert trainer.optimizer.step_count == 3
        assert not np.array_equal(before["field.trunk.0.weight"], after["field.trunk.0.weight"])
        assert not np.array_equal(before["dsk.kernel.head.weight"], after["dsk.kernel.head.weight"])

    def test_without_kernel(self, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, dataclasses.replace(tiny_config, dsk_enabled=False))
        assert trainer.dsk is None
        assert all(name.startswith("field.") for name, _ in trainer.named_tensors())
        result = trainer.train_step()
        assert result.align == 0.0
        assert result.loss == pytest.approx(result.rec)

    def test_gamma_and_origin_switches(self, tiny_dataset, tiny_config):
        config = dataclasses.replace(tiny_config, gamma_enabled=False, origin_opt_enabled=False)
        trainer = Trainer(tiny_dataset, config)
        trainer.train_step()
        assert trainer.dsk.origin_opt is False
        views, p = _random_pixels(trainer, 5, seed=4)
        with ad.no_grad():
            predicted, _ = trainer.predict(views, p)
        assert np.all((predicted.data >= 0) & (predicted.data <= 1))

    def test_same_seed_same_trajectory(self, tiny_dataset, tiny_config):
        a, b = Trainer(tiny_dataset, tiny_config), Trainer(tiny_dataset, tiny_config)
        losses_a = [a.train_step().loss for _ in range(3)]
        losses_b = [b.train_step().loss for _ in range(3)]
        assert losses_a == losses_b
        for name, value in _state(a).items():
            np.testing.assert_array_equal(value, _state(b)[name], err_msg=name)

    def test_different_seed_different_init(self, tiny_dataset, tiny_config):
        a = Trainer(tiny_dataset, tiny_config)
        b = Trainer(tiny_dataset, dataclasses.replace(tiny_config, seed=6))
        assert not np.array_equal(_state(a)["field.trunk.0.weight"], _state(b)["field.trunk.0.weight"])

    def test_sharp_render_ignores_the_kernel(self, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, tiny_config)
        trainer.train_step()
        camera = tiny_dataset.test_cameras().camera(0)
        before = render_image(trainer.field, camera, trainer.near, trainer.far, 8)
        for _, tensor in trainer.dsk.named_tensors():
            tensor.data = np.full_like(tensor.data, np.nan)
        trainer.dsk.canonical.points = np.full_like(trainer.dsk.canonical.points, np.nan)
        after = render_image(trainer.field, camera, trainer.near, trainer.far, 8)
        np.testing.assert_array_equal(after, before)
        assert np.all(np.isfinite(after))

    def test_output_files(self, tmp_path, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, tiny_config)
        history = trainer.train(tmp_path / "run")
        assert list(history.columns) == LOSS_COLUMNS
        assert list(history["iteration"]) == list(range(8))
        log = pd.read_csv(tmp_path / "run" / LOSS_LOG_NAME)
        assert list(log.columns) == LOSS_COLUMNS
        assert len(log) == 8
        assert (tmp_path / "run" / LOSS_CURVE_NAME).stat().st_size > 0
        checkpoint = load_checkpoint(tmp_path / "run" / CHECKPOINT_NAME)
        assert checkpoint.iteration == 8
        assert checkpoint.config["num_points"] == 3
        assert "dsk.canonical" in checkpoint.tensors
        assert "adam.m.field.trunk.0.weight" in checkpoint.tensors
        assert log["lr"].iloc[0] == pytest.approx(tiny_config.lr_start)


class TestResume:

    def test_interrupted_run_matches_straight_run(self, tmp_path, tiny_dataset, tiny_config):
        straight = Trainer(tiny_dataset, tiny_config)
        straight.train(tmp_path / "straight")

        first = Trainer(tiny_dataset, tiny_config)
        first.train(tmp_path / "split", iterations=4)
        second = Trainer(tiny_dataset, tiny_config)
        second.resume(tmp_path / "split" / CHECKPOINT_NAME)
        second.load_loss_log(tmp_path / "split" / LOSS_LOG_NAME)
        assert second.iteration == 4
        second.train(tmp_path / "split")

        for name, value in _state(straight).items():
            np.testing.assert_array_equal(value, _state(second)[name], err_msg=name)
        straight_log = pd.read_csv(tmp_path / "straight" / LOSS_LOG_NAME)
        split_log = pd.read_csv(tmp_path / "split" / LOSS_LOG_NAME)
        pd.testing.assert_frame_equal(straight_log, split_log)
        assert (tmp_path / "straight" / CHECKPOINT_NAME).read_bytes() == \
            (tmp_path / "split" / CHECKPOINT_NAME).read_bytes()

    def test_mismatched_checkpoint_leaves_trainer_untouched(self, tmp_path, tiny_dataset, tiny_config):
        baseline = Trainer(tiny_dataset, dataclasses.replace(tiny_config, dsk_enabled=False))
        path = baseline.save(tmp_path / "baseline.ckpt")
        trainer = Trainer(tiny_dataset, tiny_config)
        before = _state(trainer)
        with pytest.raises(CheckpointError):
            trainer.resume(path)
        assert trainer.iteration == 0
        for name, value in _state(trainer).items():
            np.testing.assert_array_equal(value, before[name])

    def test_truncated_checkpoint(self, tmp_path, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, tiny_config)
        path = trainer.save(tmp_path / "model.ckpt")
        path.write_bytes(path.read_bytes()[:-16])
        fresh = Trainer(tiny_dataset, tiny_config)
        with pytest.raises(CheckpointError):
            fresh.resume(path)
        assert fresh.iteration == 0

    def test_rebuild_inference_parts(self, tmp_path, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, tiny_config)
        trainer.train_step()
        checkpoint = load_checkpoint(trainer.save(tmp_path / "model.ckpt"))
        field = field_from_checkpoint(checkpoint)
        dsk = dsk_from_checkpoint(checkpoint)
        intrinsics = intrinsics_from_checkpoint(checkpoint)
        assert intrinsics == tiny_dataset.intrinsics
        camera = tiny_dataset.test_cameras().camera(0)
        np.testing.assert_array_equal(render_image(field, camera, 2.0, 6.0, 8),
                                      render_image(trainer.field, camera, 2.0, 6.0, 8))
        np.testing.assert_array_equal(dsk.canonical.points, trainer.dsk.canonical.points)
        np.testing.assert_array_equal(dsk["embeddings"].data, trainer.dsk["embeddings"].data)

    def test_kernel_free_checkpoint_has_no_kernel(self, tmp_path, tiny_dataset, tiny_config):
        trainer = Trainer(tiny_dataset, dataclasses.replace(tiny_config, dsk_enabled=False))
        checkpoint = load_checkpoint(trainer.save(tmp_path / "model.ckpt"))
        with pytest.raises(CheckpointError):
            dsk_from_checkpoint(checkpoint)


def _test_set_scores(trainer):
    """Mean PSNR and SSIM of sharp renders against the held-out views."""
    dataset = trainer.dataset
    cameras = dataset.test_cameras()
    psnrs, ssims = [], []
    for index in range(len(cameras)):
        linear = render_image(trainer.field, cameras.camera(index), trainer.near, trainer.far,
                              trainer.config.num_samples)
        image = np.round(gamma_encode(linear) * 255.0) / 255.0
        psnrs.append(psnr(image, dataset.test_images[index]))
        ssims.append(ssim(image, dataset.test_images[index]))
    return float(np.mean(psnrs)), float(np.mean(ssims))


@pytest.fixture(scope="module")
def motion_dataset():
    return synthesize_dataset(scene_name="blobs", blur="motion", views=16, width=64, height=64, seed=0,
                              test_views=4, motion=MotionBlurSpec(num_poses=9))


@pytest.mark.slow
class TestEndToEndDeblurring:
    """Desk-scale comparison of the kernel model against the plain baseline."""

    def test_motion_blur(self, tmp_path, motion_dataset):
        config = TrainConfig(seed=0)
        naive = Trainer(motion_dataset, dataclasses.replace(config, dsk_enabled=False))
        naive.train(tmp_path / "naive")
        full = Trainer(motion_dataset, config)
        full.train(tmp_path / "full")
        naive_psnr, naive_ssim = _test_set_scores(naive)
        full_psnr, full_ssim = _test_set_scores(full)
        assert full_psnr >= naive_psnr + 1.0
        assert full_ssim >= naive_ssim

        views, p = _random_pixels(full, 1000, seed=7)
        with ad.no_grad():
            outputs = eval_kernel(full.dsk, views, p)
        shift = np.linalg.norm(outputs.delta_pixel.data[:, 0], axis=-1)
        origin = np.linalg.norm(outputs.delta_origin.data[:, 0], axis=-1)
        # The anchor may drift by at most a quarter of the output scales: 1 pixel of
        # r_deform = 4 and 0.02 scene units of o_scale = 0.02 * (far - near) = 0.08.
        assert shift.mean() < 0.25 * full.dsk.r_deform
        assert origin.mean() < 0.25 * full.dsk.o_scale

    def test_defocus_blur(self, tmp_path):
        dataset = synthesize_dataset(scene_name="blobs", blur="defocus", views=16, width=64, height=64,
                                     seed=0, test_views=4, defocus=DefocusBlurSpec(aperture=0.12))
        config = TrainConfig(seed=0)
        naive = Trainer(dataset, dataclasses.replace(config, dsk_enabled=False))
        naive.train(tmp_path / "naive")
        full = Trainer(dataset, config)
        full.train(tmp_path / "full")
        assert _test_set_scores(full)[0] >= _test_set_scores(naive)[0] + 1.0

    def test_more_kernel_points_fit_better(self, tmp_path, motion_dataset):
        final = []
        for count in (1, 2, 3, 5):
            trainer = Trainer(motion_dataset, TrainConfig(seed=0, num_points=count))
            history = trainer.train(tmp_path / f"n{count}")
            final.append(history["rec"].tail(500).mean())
        for fewer, more in zip(final, final[1:]):
            assert more <= fewer * 1.05

    def test_reruns_are_bit_identical(self, tmp_path, motion_dataset):
        config = TrainConfig(seed=0, iterations=2000)
        for run in ("a", "b"):
            Trainer(motion_dataset, config).train(tmp_path / run)
        assert (tmp_path / "a" / CHECKPOINT_NAME).read_bytes() == (tmp_path / "b" / CHECKPOINT_NAME).read_bytes()
        assert (tmp_path / "a" / LOSS_LOG_NAME).read_text() == (tmp_path / "b" / LOSS_LOG_NAME).read_text()

    def test_smoothed_loss_does_not_increase(self, tmp_path, motion_dataset):
        history = Trainer(motion_dataset, TrainConfig(seed=0, iterations=500)).train(tmp_path / "run")
        blocks = history["loss"].groupby(history["iteration"] // 100).mean()
        assert len(blocks) == 5
        for earlier, later in zip(blocks, blocks.iloc[1:]):
            assert later <= earlier * 1.05
        assert blocks.iloc[-1] < blocks.iloc[0]

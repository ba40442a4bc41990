# -*- coding: utf-8 -*-
"""
Joint optimization of the radiance field, the kernel network and the view
embeddings.

Every step samples (view, pixel) pairs from the blurry training images. With
the kernel enabled each pixel is explained by N deformed rays blended in
linear irradiance and gamma-corrected; without it only the pixel's own ray is
rendered (the plain NeRF baseline).
"""

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd

from config import get_config_value, read_key_value_file
from src.autodiff import Tensor, backward, reset_tape
from src.data.dataset_io import Dataset
from src.errors import CheckpointError, ConfigError
from src.nerf.blur_model import (
    LossWeights,
    alignment_loss,
    blend_blurry,
    gamma_correct,
    reconstruction_loss,
    total_loss,
)
from src.nerf.dsk import DskParams, build_rays, eval_kernel
from src.nerf.field import EncodingConfig, RadianceFieldParams
from src.nerf.renderer import CameraBatch, Intrinsics, rays_from_pixels, render_ray
from src.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.training.optimizer import Adam, AdamState, exponential_lr
from src.utils.plots import plot_loss_curve

# Logger configuration
logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["iteration", "loss", "rec", "align", "lr"]
CHECKPOINT_NAME = "checkpoint.ckpt"
LOSS_LOG_NAME = "loss.csv"
LOSS_CURVE_NAME = "loss_curve.png"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class TrainConfig:
    """Training hyper-parameters; every field can be set from a config file."""

    iterations: int = 20000
    rays_per_batch: int = 256
    lr_start: float = 5e-4
    lr_end: float = 8e-5
    num_points: int = 5
    num_samples: int = 48
    seed: int = 0
    dsk_enabled: bool = True
    lambda_o: float = 10.0
    lambda_a: float = 0.1
    stratified: bool = True
    log_every: int = 100
    checkpoint_every: int = 1000
    r_init: float = 2.0
    r_deform: float = 4.0
    o_scale_fraction: float = 0.02
    embedding_dim: int = 32
    kernel_hidden: int = 64
    kernel_depth: int = 4
    epsilon: float = 0.1
    field_width: int = 64
    field_depth: int = 4
    position_freqs: int = 6
    direction_freqs: int = 2
    gamma_enabled: bool = True
    origin_opt_enabled: bool = True

    def __post_init__(self):
        if not self.lr_start >= self.lr_end > 0:
            raise ConfigError(f"need lr_start >= lr_end > 0, got {self.lr_start} and {self.lr_end}")
        if self.rays_per_batch < 1:
            raise ConfigError(f"rays_per_batch must be at least 1, got {self.rays_per_batch}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be non-negative, got {self.iterations}")
        if self.num_points < 1 or self.num_samples < 1:
            raise ConfigError(f"need num_points >= 1 and num_samples >= 1, got {self.num_points}, {self.num_samples}")
        if self.lambda_o < 0 or self.lambda_a < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.log_every < 1 or self.checkpoint_every < 1:
            raise ConfigError("log_every and checkpoint_every must be positive")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(lambda_o=self.lambda_o, lambda_a=self.lambda_a)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], base: Optional["TrainConfig"] = None) -> "TrainConfig":
        """Builds a config from raw values (strings from a key = value file, or JSON values).

        Unknown keys and unparsable values log a warning and are ignored.

        Raises:
            ConfigError: If the resulting config violates an invariant.
        """
        values = (base or cls()).to_dict()
        for key, raw in mapping.items():
            if key not in values:
                logger.warning(f"Unknown training option '{key}' ignored")
                continue
            try:
                values[key] = _convert(raw, values[key])
            except (TypeError, ValueError):
                logger.warning(f"Invalid value for {key}: {raw!r}. Using {values[key]!r}")
        return cls(**values)


def _convert(raw: Any, current: Any) -> Any:
    if isinstance(current, bool):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(current, int):
        if isinstance(raw, float) and not raw.is_integer():
            raise ValueError(f"not an integer: {raw!r}")
        return int(float(raw)) if isinstance(raw, str) and "e" in raw.lower() else int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def lr_at(iteration: int, config: TrainConfig) -> float:
    """Learning rate after ``iteration`` steps of an exponential decay from lr_start to lr_end."""
    return exponential_lr(iteration, config.iterations, config.lr_start, config.lr_end)


@dataclass
class StepResult:
    """Loss scalars of one optimization step."""

    iteration: int
    loss: float
    rec: float
    align: float
    lr: float

    def as_row(self) -> Dict[str, float]:
        return dataclasses.asdict(self)


class Trainer:
    """Owns the learnable state and runs the optimization loop.

    Args:
        dataset: Blurry training views (display space) and cameras.
        config: Hyper-parameters.
    """

    def __init__(self, dataset: Dataset, config: TrainConfig):
        self.dataset = dataset
        self.config = config
        self.intrinsics: Intrinsics = dataset.intrinsics
        self.near = float(dataset.near)
        self.far = float(dataset.far)
        self.cameras: CameraBatch = dataset.train_cameras()
        self.targets = np.asarray(dataset.train_images, dtype=np.float32)
        if self.targets.shape[0] == 0:
            raise ConfigError("the dataset has no training views")

        seed = config.seed
        self.field = RadianceFieldParams(
            EncodingConfig(config.position_freqs, config.direction_freqs),
            width=config.field_width, depth=config.field_depth,
            rng=np.random.default_rng([seed, 1]),
        )
        self.dsk: Optional[DskParams] = None
        if config.dsk_enabled:
            self.dsk = DskParams(
                num_views=dataset.num_train, width=self.intrinsics.width, height=self.intrinsics.height,
                num_points=config.num_points, embedding_dim=config.embedding_dim,
                hidden=config.kernel_hidden, depth=config.kernel_depth, epsilon=config.epsilon,
                r_init=config.r_init, r_deform=config.r_deform,
                o_scale=config.o_scale_fraction * (self.far - self.near),
                origin_opt=config.origin_opt_enabled, rng=np.random.default_rng([seed, 2]),
            )
        self.optimizer = Adam()
        self.rng = np.random.default_rng([seed, 3])
        self.iteration = 0
        self.history: List[Dict[str, float]] = []
        logger.info(
            f"Trainer ready: {dataset.num_train} views, "
            f"{'kernel with N=' + str(config.num_points) if self.dsk else 'no kernel'}, "
            f"{sum(t.size for _, t in self.named_tensors())} learnable values"
        )

    def named_tensors(self):
        """Every learnable tensor with a unique name, in a fixed order."""
        named = [(f"field.{name}", t) for name, t in self.field.named_tensors()]
        if self.dsk is not None:
            named += [(f"dsk.{name}", t) for name, t in self.dsk.named_tensors()]
        return named

    def sample_batch(self):
        """Draws views, pixel centers and observed display colors."""
        count = self.config.rays_per_batch
        views = self.rng.integers(0, self.targets.shape[0], size=count)
        rows = self.rng.integers(0, self.intrinsics.height, size=count)
        cols = self.rng.integers(0, self.intrinsics.width, size=count)
        p = np.stack([cols + 0.5, rows + 0.5], axis=-1)
        return views, p, self.targets[views, rows, cols]

    def predict(self, views: np.ndarray, p: np.ndarray, stratified: bool = False):
        """Blurry display prediction of pixels ``p`` in training views ``views``.

        Returns:
            (prediction (batch, 3), alignment loss or None).
        """
        cameras = self.cameras.select(views)
        rng = self.rng if stratified else None
        near, far, samples = self.near, self.far, self.config.num_samples
        if self.dsk is None:
            ray = rays_from_pixels(cameras.rotations, cameras.centers, self.intrinsics, p)
            linear = render_ray(self.field, ray, near, far, samples, stratified, rng)
            return (gamma_correct(linear) if self.config.gamma_enabled else linear), None

        outputs = eval_kernel(self.dsk, views, p)
        kernel = build_rays(cameras, p, outputs, self.dsk.canonical)
        colors = render_ray(self.field, kernel.rays, near, far, samples, stratified, rng)
        predicted = blend_blurry(colors, kernel.weights, gamma=self.config.gamma_enabled)
        align = alignment_loss(kernel.pixels[:, 0, :], p, outputs.delta_origin[:, 0, :],
                               self.config.lambda_o)
        return predicted, align

    def train_step(self) -> StepResult:
        """One sampled batch, one backward pass and one Adam update."""
        reset_tape()
        for _, tensor in self.named_tensors():
            tensor.zero_grad()

        views, p, observed = self.sample_batch()
        predicted, align = self.predict(views, p, stratified=self.config.stratified)
        rec = reconstruction_loss(predicted, observed)
        align = align if align is not None else Tensor(0.0)
        loss = total_loss(rec, align, self.config.lambda_a)
        backward(loss)

        lr = lr_at(min(self.iteration, self.config.iterations), self.config)
        self.optimizer.step(self.named_tensors(), lr)
        result = StepResult(self.iteration, loss.item(), rec.item(), align.item(), lr)
        self.iteration += 1
        return result

    def train(self, out_dir: Union[str, Path], iterations: Optional[int] = None) -> pd.DataFrame:
        """Runs steps until ``iterations`` (default: config.iterations) have been taken.

        Writes the loss log, periodic and final checkpoints and a loss curve to
        ``out_dir``.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        total = self.config.iterations if iterations is None else iterations
        logger.info(f"Training from iteration {self.iteration} to {total}")
        while self.iteration < total:
            result = self.train_step()
            self.history.append(result.as_row())
            if self.iteration % self.config.log_every == 0 or self.iteration == total:
                logger.info(
                    f"iter {result.iteration:6d}  loss {result.loss:.6f}  "
                    f"rec {result.rec:.6f}  align {result.align:.6f}  lr {result.lr:.3e}"
                )
            if self.iteration % self.config.checkpoint_every == 0 and self.iteration < total:
                self.save(out_dir / CHECKPOINT_NAME)
                self.write_loss_log(out_dir / LOSS_LOG_NAME)

        self.save(out_dir / CHECKPOINT_NAME)
        history = self.write_loss_log(out_dir / LOSS_LOG_NAME)
        plot_loss_curve(history, out_dir / LOSS_CURVE_NAME)
        return history

    def loss_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=LOSS_COLUMNS)

    def write_loss_log(self, path: Union[str, Path]) -> pd.DataFrame:
        history = self.loss_frame()
        history.to_csv(path, index=False, float_format="%.9g")
        return history

    def load_loss_log(self, path: Union[str, Path]) -> None:
        """Restores history rows written before the current iteration."""
        path = Path(path)
        if not path.is_file():
            return
        frame = pd.read_csv(path)
        frame = frame[frame["iteration"] < self.iteration]
        self.history = frame[LOSS_COLUMNS].to_dict("records")

    def checkpoint(self) -> Checkpoint:
        tensors = {}
        for name, tensor in self.named_tensors():
            tensors[name] = tensor.data
        if self.dsk is not None:
            tensors["dsk.canonical"] = self.dsk.canonical.points
        for name, state in self.optimizer.states.items():
            tensors[f"adam.m.{name}"] = state.m
            tensors[f"adam.v.{name}"] = state.v
        intr = self.intrinsics
        meta = {
            "adam_step": self.optimizer.step_count,
            "rng_state": self.rng.bit_generator.state,
            "intrinsics": [intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height],
            "near": self.near,
            "far": self.far,
            "field": self.field.describe(),
            "dsk": self.dsk.describe() if self.dsk is not None else None,
            "train_poses": np.asarray(self.dataset.train_poses, dtype=np.float64).tolist(),
        }
        return Checkpoint(tensors=dict(tensors), iteration=self.iteration, config=self.config.to_dict(), meta=meta)

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.checkpoint())

    def resume(self, path: Union[str, Path]) -> None:
        """Restores tensors, optimizer moments, generator state and iteration.

        Raises:
            CheckpointError: If the checkpoint does not match this trainer's
                tensors; nothing is modified in that case.
        """
        checkpoint = load_checkpoint(path)
        named = dict(self.named_tensors())
        for name, tensor in named.items():
            if name not in checkpoint.tensors:
                raise CheckpointError(f"{path}: missing tensor '{name}'")
            if checkpoint.tensors[name].shape != tensor.shape:
                raise CheckpointError(
                    f"{path}: tensor '{name}' has shape {checkpoint.tensors[name].shape}, expected {tensor.shape}"
                )
        if self.dsk is not None:
            canonical = checkpoint.tensors.get("dsk.canonical")
            if canonical is None or canonical.shape != self.dsk.canonical.points.shape:
                raise CheckpointError(f"{path}: canonical kernel missing or of the wrong size")
        moments = {}
        for name in named:
            m, v = checkpoint.tensors.get(f"adam.m.{name}"), checkpoint.tensors.get(f"adam.v.{name}")
            if (m is None) != (v is None) or (m is not None and m.shape != named[name].shape):
                raise CheckpointError(f"{path}: optimizer state of '{name}' is inconsistent")
            if m is not None:
                moments[name] = AdamState(m.copy(), v.copy())
        if "rng_state" not in checkpoint.meta:
            raise CheckpointError(f"{path}: missing random generator state")

        for name, tensor in named.items():
            tensor.data = checkpoint.tensors[name].astype(tensor.dtype, copy=True)
            tensor.zero_grad()
        if self.dsk is not None:
            self.dsk.canonical.points = checkpoint.tensors["dsk.canonical"].astype(np.float32, copy=True)
        self.optimizer.states = moments
        self.optimizer.step_count = int(checkpoint.meta.get("adam_step", 0))
        self.rng.bit_generator.state = checkpoint.meta["rng_state"]
        self.iteration = checkpoint.iteration
        logger.info(f"Resumed training at iteration {self.iteration} from {path}")


def field_from_checkpoint(checkpoint: Checkpoint) -> RadianceFieldParams:
    """Rebuilds the sharp radiance field stored in a checkpoint."""
    describe = checkpoint.meta.get("field")
    if not describe:
        raise CheckpointError("checkpoint has no radiance field description")
    field = RadianceFieldParams(
        EncodingConfig(describe["position_freqs"], describe["direction_freqs"]),
        width=describe["width"], depth=describe["depth"], skip_layer=describe["skip_layer"],
        color_width=describe["color_width"],
    )
    _load_prefixed(field, checkpoint, "field.")
    return field


def dsk_from_checkpoint(checkpoint: Checkpoint) -> DskParams:
    """Rebuilds the kernel network, embeddings and canonical kernel stored in a checkpoint."""
    describe = checkpoint.meta.get("dsk")
    if not describe:
        raise CheckpointError("checkpoint was trained without the kernel")
    dsk = DskParams(**describe)
    _load_prefixed(dsk, checkpoint, "dsk.")
    canonical = checkpoint.tensors.get("dsk.canonical")
    if canonical is None or canonical.shape != dsk.canonical.points.shape:
        raise CheckpointError("checkpoint canonical kernel missing or of the wrong size")
    dsk.canonical.points = canonical.astype(np.float32, copy=True)
    return dsk


def intrinsics_from_checkpoint(checkpoint: Checkpoint) -> Intrinsics:
    values = checkpoint.meta.get("intrinsics")
    if not values or len(values) != 6:
        raise CheckpointError("checkpoint has no intrinsics")
    fx, fy, cx, cy, width, height = values
    return Intrinsics(float(fx), float(fy), float(cx), float(cy), int(width), int(height))


def _load_prefixed(params, checkpoint: Checkpoint, prefix: str) -> None:
    state = {name[len(prefix):]: array for name, array in checkpoint.tensors.items() if name.startswith(prefix)}
    try:
        params.load_state(state)
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"checkpoint does not match the stored architecture: {e}") from e


def load_train_config(config_file: Optional[Union[str, Path]] = None,
                      overrides: Optional[Mapping[str, Any]] = None) -> TrainConfig:
    """Resolves the training config: defaults, then the ``train`` and ``dsk``
    sections of config.json, then ``config_file`` (key = value lines), then
    ``overrides`` (command-line flags).
    """
    config = TrainConfig.from_mapping(get_config_value("train_options", {}) or {})
    if config_file is not None:
        config = TrainConfig.from_mapping(read_key_value_file(config_file), base=config)
        logger.info(f"Training options read from {config_file}")
    if overrides:
        config = TrainConfig.from_mapping(overrides, base=config)
    return config

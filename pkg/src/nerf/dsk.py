# -*- coding: utf-8 -*-
"""
Deformable sparse kernel.

For a target pixel p and each canonical kernel point q', a small MLP
conditioned on a per-view embedding predicts a camera-frame origin
translation, a pixel offset and a blend weight. The deformed points
q = p + q' + dq then define N rays whose renders are blended into the
blurry observation of p. The first canonical point is the anchor (0, 0).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from src.autodiff import Tensor, broadcast_to, concat, no_grad, relu, reshape, softmax
from src.errors import ConfigError
from src.nerf.layers import ParameterSet, dense, init_layer
from src.nerf.renderer import Camera, CameraBatch, Ray, rays_from_pixels

# Logger configuration
logger = logging.getLogger(__name__)

OUTPUTS_PER_POINT = 6  # (delta origin: 3, delta pixel: 2, raw weight: 1)


@dataclass
class CanonicalKernel:
    """Canonical kernel locations relative to the target pixel, in pixels."""

    points: np.ndarray
    r_init: float

    @property
    def count(self) -> int:
        return self.points.shape[0]


@dataclass
class KernelPointOutput:
    """Per-point predictions, each shaped (batch, N, ...)."""

    delta_origin: Tensor
    delta_pixel: Tensor
    weight_raw: Tensor


@dataclass
class KernelRays:
    """Rays materialized from a kernel: rays (batch, N), weights (batch, N), pixels (batch, N, 2)."""

    rays: Ray
    weights: Tensor
    pixels: Tensor


def init_canonical(count: int, r_init: float = 2.0,
                   rng: Optional[np.random.Generator] = None) -> CanonicalKernel:
    """Anchor at the origin plus ``count - 1`` points uniform in a disk of radius ``r_init``."""
    if count < 1:
        raise ConfigError(f"a kernel needs at least one point, got {count}")
    if r_init <= 0:
        raise ConfigError(f"r_init must be positive, got {r_init}")
    rng = rng if rng is not None else np.random.default_rng(0)
    points = np.zeros((count, 2), dtype=np.float32)
    if count > 1:
        radius = r_init * np.sqrt(rng.uniform(size=count - 1))
        angle = 2.0 * np.pi * rng.uniform(size=count - 1)
        points[1:, 0] = radius * np.cos(angle)
        points[1:, 1] = radius * np.sin(angle)
        # float32 rounding may push a point a hair past the disk edge
        lengths = np.linalg.norm(points[1:], axis=1)
        over = lengths > r_init
        points[1:][over] *= np.float32(r_init) / lengths[over][:, None]
    return CanonicalKernel(points=points, r_init=float(r_init))


class DskParams(ParameterSet):
    """Kernel MLP weights, per-view embeddings and the canonical kernel.

    Args:
        num_views: Number of training views (one embedding each).
        width: Image width in pixels, used to normalize p.
        height: Image height in pixels.
        num_points: N, canonical kernel points per pixel.
        embedding_dim: Length of each view embedding.
        hidden: Channels per hidden layer.
        depth: Number of hidden layers; the first feeds the last through a shortcut.
        epsilon: Gain applied to every raw head output.
        r_init: Canonical disk radius in pixels.
        r_deform: Pixels per unit of scaled offset output.
        o_scale: Scene units per unit of scaled origin output.
        origin_opt: When False, origin translations are forced to zero.
        rng: Seeded generator.
    """

    def __init__(self, num_views: int, width: int, height: int, num_points: int = 5,
                 embedding_dim: int = 32, hidden: int = 64, depth: int = 4,
                 epsilon: float = 0.1, r_init: float = 2.0, r_deform: float = 4.0,
                 o_scale: float = 0.08, origin_opt: bool = True,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        if num_views < 1:
            raise ConfigError("the kernel needs at least one training view")
        if depth < 1:
            raise ConfigError(f"kernel MLP depth must be at least 1, got {depth}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.num_views = num_views
        self.width = width
        self.height = height
        self.embedding_dim = embedding_dim
        self.hidden = hidden
        self.depth = depth
        self.epsilon = epsilon
        self.r_deform = r_deform
        self.o_scale = o_scale
        self.origin_opt = origin_opt
        self.canonical = init_canonical(num_points, r_init, rng)

        fan_in = 2 + 2 + embedding_dim
        for i in range(depth):
            layer_in = fan_in if i == 0 else hidden
            if self._shortcut_at(i):
                layer_in += hidden
            self.add_layer(f"kernel.{i}", init_layer(rng, layer_in, hidden))
        self.add_layer("kernel.head", init_layer(rng, hidden, OUTPUTS_PER_POINT, zero=True))
        self.tensors["embeddings"] = Tensor(rng.normal(size=(num_views, embedding_dim)), requires_grad=True)

    def _shortcut_at(self, layer: int) -> bool:
        return self.depth > 1 and layer == self.depth - 1

    def describe(self) -> dict:
        return {
            "num_views": self.num_views,
            "width": self.width,
            "height": self.height,
            "num_points": self.canonical.count,
            "embedding_dim": self.embedding_dim,
            "hidden": self.hidden,
            "depth": self.depth,
            "epsilon": self.epsilon,
            "r_init": self.canonical.r_init,
            "r_deform": self.r_deform,
            "o_scale": self.o_scale,
            "origin_opt": self.origin_opt,
        }


def eval_kernel(params: DskParams, view_index, p: np.ndarray,
                canonical_points: Optional[np.ndarray] = None) -> KernelPointOutput:
    """Predicts (delta origin, delta pixel, raw weight) for every pixel and kernel point.

    Args:
        params: Kernel weights and embeddings.
        view_index: (batch,) training-view indices.
        p: (batch, 2) target pixel coordinates in pixels; normalized to [-1, 1]
            by the image size before entering the MLP.
        canonical_points: (N, 2) canonical points; defaults to ``params.canonical``.

    Returns:
        Outputs shaped (batch, N, 3), (batch, N, 2) and (batch, N).
    """
    view_index = np.atleast_1d(np.asarray(view_index))
    if not np.issubdtype(view_index.dtype, np.integer) or np.any(view_index < 0) \
            or np.any(view_index >= params.num_views):
        raise IndexError(f"view index out of range [0, {params.num_views}): {view_index}")
    p = np.asarray(p, dtype=np.float64).reshape(-1, 2)
    if p.shape[0] != view_index.shape[0]:
        raise ValueError(f"{p.shape[0]} pixels but {view_index.shape[0]} view indices")
    points = params.canonical.points if canonical_points is None else np.asarray(canonical_points).reshape(-1, 2)

    batch, count = p.shape[0], points.shape[0]
    size = np.array([params.width, params.height], dtype=np.float64)
    p_norm = np.broadcast_to((2.0 * p / size - 1.0)[:, None, :], (batch, count, 2))
    q_norm = np.broadcast_to((points / params.canonical.r_init)[None], (batch, count, 2))
    embedding = reshape(params["embeddings"][view_index], (batch, 1, params.embedding_dim))
    inputs = concat([Tensor(p_norm), Tensor(q_norm),
                     broadcast_to(embedding, (batch, count, params.embedding_dim))], axis=-1)

    first = relu(dense(inputs, params["kernel.0.weight"], params["kernel.0.bias"]))
    h = first
    for i in range(1, params.depth):
        if params._shortcut_at(i):
            h = concat([h, first], axis=-1)
        h = relu(dense(h, params[f"kernel.{i}.weight"], params[f"kernel.{i}.bias"]))
    scaled = dense(h, params["kernel.head.weight"], params["kernel.head.bias"]) * params.epsilon

    if params.origin_opt:
        delta_origin = scaled[..., 0:3] * params.o_scale
    else:
        delta_origin = Tensor(np.zeros((batch, count, 3)))
    return KernelPointOutput(
        delta_origin=delta_origin,
        delta_pixel=scaled[..., 3:5] * params.r_deform,
        weight_raw=scaled[..., 5],
    )


def normalize_weights(raw) -> Tensor:
    """Softmax over the last axis: strictly positive weights summing to one."""
    return softmax(raw if isinstance(raw, Tensor) else Tensor(raw))


def build_rays(camera: Union[Camera, CameraBatch], p: np.ndarray, outputs: KernelPointOutput,
               canonical: CanonicalKernel) -> KernelRays:
    """Materializes the N optimized rays of every target pixel.

    q_i = p + q'_i + dq_i; each ray starts at center + rotation @ do_i and
    passes through pixel q_i.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1, 2)
    if isinstance(camera, Camera):
        camera = camera.batch(p.shape[0])
    if outputs.delta_pixel.shape[:-1] != (p.shape[0], canonical.count):
        raise ValueError(
            f"kernel outputs {outputs.delta_pixel.shape[:-1]} do not match "
            f"{p.shape[0]} pixels x {canonical.count} points"
        )
    base = p[:, None, :] + canonical.points[None].astype(np.float64)
    pixels = Tensor(base) + outputs.delta_pixel
    rays = rays_from_pixels(camera.rotations[:, None], camera.centers[:, None], camera.intrinsics,
                            pixels, origin_offsets=outputs.delta_origin)
    return KernelRays(rays=rays, weights=normalize_weights(outputs.weight_raw), pixels=pixels)


def kernel_points(params: DskParams, cameras: CameraBatch, view_index: int, p: np.ndarray):
    """Deformed kernel pixels (batch, N, 2) and weights (batch, N) for one view, as arrays."""
    p = np.asarray(p, dtype=np.float64).reshape(-1, 2)
    views = np.full(p.shape[0], view_index, dtype=np.int64)
    with no_grad():
        outputs = eval_kernel(params, views, p)
        kernel = build_rays(cameras.select(views), p, outputs, params.canonical)
    return kernel.pixels.data.copy(), kernel.weights.data.copy()

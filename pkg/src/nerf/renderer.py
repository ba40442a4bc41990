# -*- coding: utf-8 -*-
"""
Pinhole ray generation and differentiable volume rendering.

Camera frame convention: x right, y down, z forward (viewing direction).
Pixel (i, j) covers [j, j+1) x [i, i+1) and its center sits at (j + 0.5, i + 0.5).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.autodiff import Tensor, broadcast_to, concat, exp, matmul, no_grad, norm, reshape
from src.autodiff import sum as tsum
from src.errors import ConfigError, ShapeError
from src.nerf.field import RadianceFieldParams, eval_field

# Logger configuration
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics shared by all views of a dataset (pixel units)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ConfigError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @classmethod
    def centered(cls, width: int, height: int, focal: float) -> "Intrinsics":
        return cls(float(focal), float(focal), width / 2.0, height / 2.0, int(width), int(height))


@dataclass
class Camera:
    """Camera-to-world rotation and center plus intrinsics."""

    rotation: np.ndarray
    center: np.ndarray
    intrinsics: Intrinsics

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-5):
            raise ConfigError("camera rotation is not orthonormal")

    @classmethod
    def from_pose(cls, pose: np.ndarray, intrinsics: Intrinsics) -> "Camera":
        """Builds a camera from a row-major 3x4 camera-to-world matrix."""
        pose = np.asarray(pose, dtype=np.float64).reshape(3, 4)
        return cls(pose[:, :3], pose[:, 3], intrinsics)

    @property
    def pose(self) -> np.ndarray:
        return np.concatenate([self.rotation, self.center[:, None]], axis=1)

    @property
    def fx(self) -> float:
        return self.intrinsics.fx

    @property
    def fy(self) -> float:
        return self.intrinsics.fy

    @property
    def cx(self) -> float:
        return self.intrinsics.cx

    @property
    def cy(self) -> float:
        return self.intrinsics.cy

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    def batch(self, size: int) -> "CameraBatch":
        """Repeats this camera ``size`` times."""
        return CameraBatch(np.repeat(self.rotation[None], size, axis=0),
                           np.repeat(self.center[None], size, axis=0), self.intrinsics)


@dataclass
class CameraBatch:
    """One camera per batch element, all sharing intrinsics."""

    rotations: np.ndarray
    centers: np.ndarray
    intrinsics: Intrinsics

    @classmethod
    def from_poses(cls, poses: np.ndarray, intrinsics: Intrinsics) -> "CameraBatch":
        poses = np.asarray(poses, dtype=np.float64).reshape(-1, 3, 4)
        return cls(poses[:, :, :3], poses[:, :, 3], intrinsics)

    def __len__(self) -> int:
        return self.rotations.shape[0]

    def select(self, index: np.ndarray) -> "CameraBatch":
        return CameraBatch(self.rotations[index], self.centers[index], self.intrinsics)

    def camera(self, index: int) -> Camera:
        return Camera(self.rotations[index], self.centers[index], self.intrinsics)


@dataclass
class Ray:
    """Batch of rays; origin and direction share the shape (..., 3)."""

    origin: Tensor
    direction: Tensor

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.origin.shape[:-1]


@dataclass
class SampleSet:
    """Sorted sample distances t^(1..D) along each ray, with the bounds."""

    t: np.ndarray
    near: float
    far: float


def look_at(center: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation whose z axis points from ``center`` to ``target``."""
    forward = np.asarray(target, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-8:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=1)


def pixel_grid(width: int, height: int) -> np.ndarray:
    """Pixel-center coordinates of a full image, shape (height, width, 2) as (x, y)."""
    xs, ys = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5, indexing="xy")
    return np.stack([xs, ys], axis=-1)


def rays_from_pixels(rotations: np.ndarray, centers: np.ndarray, intrinsics: Intrinsics,
                     pixels, origin_offsets: Optional[Tensor] = None) -> Ray:
    """Casts rays through continuous pixel coordinates.

    Args:
        rotations: Camera-to-world rotations broadcastable to (..., 3, 3).
        centers: Camera centers broadcastable to (..., 3).
        intrinsics: Pinhole intrinsics.
        pixels: (..., 2) pixel coordinates, may be a differentiable tensor.
        origin_offsets: Optional (..., 3) camera-frame origin translations.

    Returns:
        Rays with world-space origins and unit directions.
    """
    pixels = pixels if isinstance(pixels, Tensor) else Tensor(pixels)
    lead = pixels.shape[:-1]
    rotations = Tensor(rotations)
    x = (pixels[..., 0] - intrinsics.cx) / intrinsics.fx
    y = (pixels[..., 1] - intrinsics.cy) / intrinsics.fy
    camera_dirs = concat([reshape(x, lead + (1,)), reshape(y, lead + (1,)),
                          Tensor(np.ones(lead + (1,)))], axis=-1)
    world = tsum(rotations * reshape(camera_dirs, lead + (1, 3)), axis=-1)
    direction = world / reshape(norm(world, axis=-1), lead + (1,))

    origin = Tensor(np.broadcast_to(centers, lead + (3,)))
    if origin_offsets is not None:
        origin = origin + tsum(rotations * reshape(origin_offsets, lead + (1, 3)), axis=-1)
    return Ray(origin, direction)


def generate_ray(camera: Camera, p) -> Ray:
    """Ray from the camera center through continuous pixel coordinate(s) ``p``."""
    return rays_from_pixels(camera.rotation, camera.center, camera.intrinsics, p)


def sample_along_ray(ray: Ray, near: float, far: float, num_samples: int,
                     stratified: bool = False, rng: Optional[np.random.Generator] = None) -> SampleSet:
    """Splits [near, far] into equal bins and takes one distance per bin.

    Deterministic mode returns bin midpoints; stratified mode draws one
    uniform sample inside each bin, independently per ray.
    """
    if near >= far or near < 0:
        raise ValueError(f"invalid ray bounds: near={near}, far={far}")
    if num_samples < 1:
        raise ValueError(f"need at least one sample per ray, got {num_samples}")
    edges = np.linspace(near, far, num_samples + 1)
    width = (far - near) / num_samples
    shape = tuple(ray.batch_shape) + (num_samples,)
    if stratified:
        if rng is None:
            raise ValueError("stratified sampling needs a random generator")
        t = edges[:-1] + rng.uniform(size=shape) * width
    else:
        t = np.broadcast_to(edges[:-1] + 0.5 * width, shape).copy()
    return SampleSet(t=t, near=float(near), far=float(far))


def _optical_depths(sigmas: Tensor, samples: SampleSet) -> Tensor:
    """sigma^(i) * delta^(i); the last interval closes against the far plane."""
    if np.any(sigmas.data < 0):
        raise ValueError("densities must be non-negative")
    t = samples.t
    if sigmas.shape[-1] != t.shape[-1]:
        raise ShapeError("composite", (sigmas.shape, t.shape), "sample counts differ")
    closed = np.concatenate([t, np.full(t.shape[:-1] + (1,), samples.far)], axis=-1)
    return sigmas * np.diff(closed, axis=-1)


def _transmittance_of(optical: Tensor) -> Tensor:
    num = optical.shape[-1]
    strictly_before = np.triu(np.ones((num, num)), k=1)
    accumulated = reshape(matmul(reshape(optical, (-1, num)), strictly_before), optical.shape)
    return exp(-accumulated)


def transmittance(sigmas: Tensor, samples: SampleSet) -> Tensor:
    """T^(i) = exp(-sum_{j<i} sigma^(j) delta^(j)), so T^(1) = 1."""
    return _transmittance_of(_optical_depths(sigmas, samples))


def composite_weights(sigmas: Tensor, samples: SampleSet) -> Tensor:
    """Per-sample weights T^(i) * (1 - exp(-sigma^(i) delta^(i)))."""
    optical = _optical_depths(sigmas, samples)
    return _transmittance_of(optical) * (1.0 - exp(-optical))


def composite(colors: Tensor, sigmas: Tensor, samples: SampleSet) -> Tensor:
    """Alpha-composites linear colors (..., D, 3) with densities (..., D)."""
    if colors.shape[:-1] != sigmas.shape or colors.shape[-1] != 3:
        raise ShapeError("composite", (colors.shape, sigmas.shape), "colors must be (..., D, 3)")
    weights = composite_weights(sigmas, samples)
    return tsum(reshape(weights, weights.shape + (1,)) * colors, axis=-2)


def render_ray(params: RadianceFieldParams, ray: Ray, near: float, far: float, num_samples: int,
               stratified: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Renders linear RGB for every ray in the batch."""
    samples = sample_along_ray(ray, near, far, num_samples, stratified, rng)
    lead = ray.batch_shape
    origin = reshape(ray.origin, lead + (1, 3))
    direction = reshape(ray.direction, lead + (1, 3))
    t = Tensor(samples.t.reshape(samples.t.shape + (1,)))
    points = origin + t * direction
    colors, sigmas = eval_field(params, points, broadcast_to(direction, points.shape))
    return composite(colors, sigmas, samples)


def render_image(params: RadianceFieldParams, camera: Camera, near: float, far: float,
                 num_samples: int, chunk: int = 4096) -> np.ndarray:
    """Renders a full sharp linear image, shape (height, width, 3)."""
    pixels = pixel_grid(camera.width, camera.height).reshape(-1, 2)
    out = np.zeros((pixels.shape[0], 3), dtype=np.float32)
    with no_grad():
        for start in range(0, pixels.shape[0], chunk):
            ray = generate_ray(camera, pixels[start:start + chunk])
            out[start:start + chunk] = render_ray(params, ray, near, far, num_samples).data
    logger.debug(f"Rendered {camera.width}x{camera.height} image with {num_samples} samples per ray")
    return out.reshape(camera.height, camera.width, 3)

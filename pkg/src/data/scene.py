# -*- coding: utf-8 -*-
"""
Analytic Gaussian-blob scenes and an independent dense-marching reference renderer.

The reference renderer works directly on numpy float64 arrays and shares no
code with the differentiable renderer, so it can serve as ground truth.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from src.errors import ConfigError
from src.nerf.renderer import Camera, pixel_grid

# Logger configuration
logger = logging.getLogger(__name__)

SCENE_NAMES = ("blobs", "single", "empty")
MIN_REFERENCE_STEPS = 64


@dataclass
class Blob:
    """Isotropic Gaussian density lobe with a constant albedo."""

    center: np.ndarray
    scale: float
    amplitude: float
    albedo: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.albedo = np.asarray(self.albedo, dtype=np.float64).reshape(3)
        if self.scale <= 0:
            raise ConfigError(f"blob scale must be positive, got {self.scale}")
        if self.amplitude < 0:
            raise ConfigError(f"blob amplitude must be non-negative, got {self.amplitude}")
        if np.any(self.albedo < 0) or np.any(self.albedo > 1):
            raise ConfigError(f"blob albedo must lie in [0, 1], got {self.albedo}")


@dataclass
class AnalyticScene:
    """Sum of Gaussian blobs in front of a constant background."""

    name: str
    blobs: List[Blob] = field(default_factory=list)
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    near: float = 2.0
    far: float = 6.0

    def __post_init__(self):
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        if not 0 <= self.near < self.far:
            raise ConfigError(f"invalid scene bounds: near={self.near}, far={self.far}")

    def _lobes(self, x: np.ndarray) -> np.ndarray:
        """Per-blob density contributions, shape (..., K)."""
        if not self.blobs:
            return np.zeros(x.shape[:-1] + (0,))
        centers = np.stack([b.center for b in self.blobs])
        scales = np.array([b.scale for b in self.blobs])
        amplitudes = np.array([b.amplitude for b in self.blobs])
        sq = np.sum((x[..., None, :] - centers) ** 2, axis=-1)
        return amplitudes * np.exp(-sq / (2.0 * scales ** 2))

    def density(self, x: np.ndarray) -> np.ndarray:
        return self._lobes(x).sum(axis=-1)

    def radiance(self, x: np.ndarray):
        """Density (...) and density-weighted albedo (..., 3) at positions x."""
        lobes = self._lobes(x)
        sigma = lobes.sum(axis=-1)
        if not self.blobs:
            return sigma, np.zeros(x.shape[:-1] + (3,))
        albedos = np.stack([b.albedo for b in self.blobs])
        weighted = lobes @ albedos
        color = np.divide(weighted, sigma[..., None], out=np.zeros_like(weighted),
                          where=sigma[..., None] > 1e-12)
        return sigma, color


def make_scene(name: str, seed: int = 0) -> AnalyticScene:
    """Builds one of the named scenes; ``blobs`` is drawn from ``seed``."""
    if name == "empty":
        return AnalyticScene(name="empty")
    if name == "single":
        return AnalyticScene(name="single", blobs=[Blob(np.zeros(3), 0.5, 20.0, (0.9, 0.35, 0.2))])
    if name == "blobs":
        rng = np.random.default_rng(seed)
        blobs = []
        for _ in range(6):
            blobs.append(Blob(
                center=rng.uniform(-0.8, 0.8, size=3) * np.array([1.0, 1.0, 0.6]),
                scale=float(rng.uniform(0.2, 0.4)),
                amplitude=float(rng.uniform(10.0, 30.0)),
                albedo=rng.uniform(0.15, 0.95, size=3),
            ))
        return AnalyticScene(name="blobs", blobs=blobs)
    raise ConfigError(f"unknown scene '{name}', expected one of {SCENE_NAMES}")


def camera_directions(camera: Camera, pixels: np.ndarray) -> np.ndarray:
    """Camera-frame pinhole directions with z = 1, shape (..., 3)."""
    intr = camera.intrinsics
    x = (pixels[..., 0] - intr.cx) / intr.fx
    y = (pixels[..., 1] - intr.cy) / intr.fy
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def march(scene: AnalyticScene, origins: np.ndarray, directions: np.ndarray, steps: int) -> np.ndarray:
    """Dense uniform marching with bin-midpoint samples; returns linear RGB (M, 3).

    Args:
        scene: The analytic scene.
        origins: (M, 3) world-space ray origins.
        directions: (M, 3) world-space unit directions.
        steps: Number of uniform bins between the scene bounds.
    """
    width = (scene.far - scene.near) / steps
    t = scene.near + (np.arange(steps) + 0.5) * width
    points = origins[:, None, :] + t[None, :, None] * directions[:, None, :]
    sigma, color = scene.radiance(points)
    optical = sigma * width
    alpha = 1.0 - np.exp(-optical)
    transmittance = np.exp(-(np.cumsum(optical, axis=-1) - optical))
    weights = transmittance * alpha
    rgb = np.sum(weights[..., None] * color, axis=-2)
    return rgb + (1.0 - weights.sum(axis=-1))[:, None] * scene.background


def render_rays(scene: AnalyticScene, origins: np.ndarray, directions: np.ndarray,
                steps: int, chunk: int = 2048) -> np.ndarray:
    """Chunked ``march`` over any number of rays."""
    out = np.empty((origins.shape[0], 3))
    for start in range(0, origins.shape[0], chunk):
        stop = start + chunk
        out[start:stop] = march(scene, origins[start:stop], directions[start:stop], steps)
    return out


def render_reference(scene: AnalyticScene, camera: Camera, steps: int = 128) -> np.ndarray:
    """Sharp linear image (height, width, 3) of the scene seen from ``camera``."""
    if steps < MIN_REFERENCE_STEPS:
        raise ValueError(f"reference rendering needs at least {MIN_REFERENCE_STEPS} steps, got {steps}")
    pixels = pixel_grid(camera.width, camera.height).reshape(-1, 2)
    local = camera_directions(camera, pixels)
    directions = local @ camera.rotation.T
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.center, directions.shape)
    image = render_rays(scene, origins, directions, steps)
    return image.reshape(camera.height, camera.width, 3)

# -*- coding: utf-8 -*-
"""
Camera-motion and defocus blur synthesis, and whole-dataset generation.

Motion blur: every training view gets its own random pose perturbation; the
view is rendered at poses interpolated between the original and the
perturbed pose and the renders are averaged in linear RGB.

Defocus blur: thin-lens model. Lens samples jitter the ray origin on an
aperture disk in the camera plane and every jittered ray is re-aimed at the
pixel's point on the focus plane.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.data.dataset_io import Dataset
from src.data.scene import (
    AnalyticScene,
    camera_directions,
    make_scene,
    render_rays,
    render_reference,
)
from src.errors import ConfigError
from src.nerf.blur_model import gamma_encode
from src.nerf.renderer import Camera, Intrinsics, look_at, pixel_grid

# Logger configuration
logger = logging.getLogger(__name__)

BLUR_TYPES = ("motion", "defocus", "none")


@dataclass
class MotionBlurSpec:
    """Bounds of the per-view pose perturbation and the number of interpolated poses.

    Attributes:
        max_angle: Largest rotation angle in radians.
        max_translation: Largest center displacement in scene units.
        num_poses: M, poses along the path; 1 means no blur.
    """

    max_angle: float = 0.05
    max_translation: float = 0.15
    num_poses: int = 9

    def __post_init__(self):
        if self.num_poses < 1:
            raise ConfigError(f"motion blur needs at least one pose, got {self.num_poses}")
        if self.max_angle < 0 or self.max_translation < 0:
            raise ConfigError("motion blur bounds must be non-negative")


@dataclass
class MotionPerturbation:
    """A concrete perturbation: rotation about a camera-frame axis plus a world translation."""

    axis: np.ndarray
    angle: float
    translation: np.ndarray

    @property
    def is_zero(self) -> bool:
        return self.angle == 0 and not np.any(self.translation)


@dataclass
class DefocusBlurSpec:
    """Thin-lens settings.

    Attributes:
        aperture: Aperture radius in scene units (0 gives a pinhole).
        focus_distance: Depth of the focus plane; drawn per view when None.
        focus_range: Depth range the per-view focus distance is drawn from,
            the span of depths the scene content occupies.
        num_lens_samples: S, lens samples per pixel.
    """

    aperture: float = 0.12
    focus_distance: Optional[float] = None
    num_lens_samples: int = 16
    focus_range: Tuple[float, float] = (3.0, 5.0)

    def __post_init__(self):
        if self.aperture < 0:
            raise ConfigError(f"aperture must be non-negative, got {self.aperture}")
        if self.num_lens_samples < 1:
            raise ConfigError("defocus blur needs at least one lens sample")


def rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix for ``angle`` radians about unit ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def draw_perturbation(spec: MotionBlurSpec, rng: np.random.Generator) -> MotionPerturbation:
    """Random axis and direction; magnitudes uniform in [0.5, 1] times the bounds."""
    axis = rng.normal(size=3)
    direction = rng.normal(size=3)
    angle = spec.max_angle * rng.uniform(0.5, 1.0)
    length = spec.max_translation * rng.uniform(0.5, 1.0)
    return MotionPerturbation(axis / np.linalg.norm(axis), float(angle),
                              direction / np.linalg.norm(direction) * length)


def interpolate_poses(camera: Camera, perturbation: MotionPerturbation, num_poses: int):
    """Cameras along the path from the original to the perturbed pose.

    Rotation follows the geodesic (constant angular speed about a fixed axis),
    translation is linear.
    """
    if num_poses == 1:
        return [camera]
    cameras = []
    for s in np.linspace(0.0, 1.0, num_poses):
        rotation = camera.rotation @ rodrigues(perturbation.axis, s * perturbation.angle)
        cameras.append(Camera(rotation, camera.center + s * perturbation.translation, camera.intrinsics))
    return cameras


def synth_motion_blur(scene: AnalyticScene, camera: Camera, spec: MotionBlurSpec,
                      perturbation: Optional[MotionPerturbation] = None,
                      rng: Optional[np.random.Generator] = None, steps: int = 128) -> np.ndarray:
    """Blurry linear image averaged over ``spec.num_poses`` interpolated poses."""
    if perturbation is None:
        if rng is None:
            raise ValueError("either a perturbation or a random generator is required")
        perturbation = draw_perturbation(spec, rng)
    if spec.num_poses == 1 or perturbation.is_zero:
        return render_reference(scene, camera, steps)
    renders = [render_reference(scene, c, steps) for c in interpolate_poses(camera, perturbation, spec.num_poses)]
    return np.mean(renders, axis=0)


def synth_defocus_blur(scene: AnalyticScene, camera: Camera, spec: DefocusBlurSpec,
                       rng: Optional[np.random.Generator] = None, steps: int = 128) -> np.ndarray:
    """Blurry linear image from a thin lens focused at ``spec.focus_distance``."""
    if spec.aperture == 0:
        return render_reference(scene, camera, steps)
    rng = rng if rng is not None else np.random.default_rng(0)
    focus = spec.focus_distance
    if focus is None:
        low = max(spec.focus_range[0], scene.near)
        high = min(spec.focus_range[1], scene.far)
        focus = float(rng.uniform(low, high))
    if not scene.near < focus < scene.far:
        raise ConfigError(f"focus distance {focus} outside ({scene.near}, {scene.far})")

    pixels = pixel_grid(camera.width, camera.height).reshape(-1, 2)
    focus_points = camera_directions(camera, pixels) * focus
    count = spec.num_lens_samples
    radius = spec.aperture * np.sqrt(rng.uniform(size=(pixels.shape[0], count)))
    theta = 2.0 * np.pi * rng.uniform(size=(pixels.shape[0], count))
    lens = np.stack([radius * np.cos(theta), radius * np.sin(theta), np.zeros_like(radius)], axis=-1)

    local = focus_points[:, None, :] - lens
    local /= np.linalg.norm(local, axis=-1, keepdims=True)
    directions = (local @ camera.rotation.T).reshape(-1, 3)
    origins = (camera.center + lens @ camera.rotation.T).reshape(-1, 3)
    colors = render_rays(scene, origins, directions, steps).reshape(pixels.shape[0], count, 3)
    return colors.mean(axis=1).reshape(camera.height, camera.width, 3)


def hemisphere_cameras(count: int, intrinsics: Intrinsics, radius: float = 4.0,
                       min_elevation: float = 15.0, max_elevation: float = 60.0):
    """Look-at cameras on a spiral over the upper hemisphere, all facing the origin."""
    golden = np.pi * (3.0 - np.sqrt(5.0))
    cameras = []
    for i in range(count):
        azimuth = i * golden
        frac = 0.5 if count == 1 else i / (count - 1)
        elevation = np.radians(min_elevation + frac * (max_elevation - min_elevation))
        center = radius * np.array([np.cos(elevation) * np.cos(azimuth),
                                    np.cos(elevation) * np.sin(azimuth),
                                    np.sin(elevation)])
        cameras.append(Camera(look_at(center, np.zeros(3)), center, intrinsics))
    return cameras


def synthesize_dataset(scene_name: str = "blobs", blur: str = "motion", views: int = 16,
                       width: int = 64, height: int = 64, seed: int = 0, test_views: int = 4,
                       motion: Optional[MotionBlurSpec] = None,
                       defocus: Optional[DefocusBlurSpec] = None,
                       steps: int = 128, focal_scale: float = 1.2) -> Dataset:
    """Generates blurry training views and sharp held-out views of an analytic scene.

    All randomness comes from ``seed``: the scene itself, and one independent
    generator per training view for its perturbation or focus distance.
    """
    if blur not in BLUR_TYPES:
        raise ConfigError(f"unknown blur type '{blur}', expected one of {BLUR_TYPES}")
    if views < 1 or test_views < 0:
        raise ConfigError(f"invalid view counts: views={views}, test_views={test_views}")
    motion = motion or MotionBlurSpec()
    defocus = defocus or DefocusBlurSpec()

    scene = make_scene(scene_name, seed)
    intrinsics = Intrinsics.centered(width, height, focal_scale * width)
    cameras = hemisphere_cameras(views + test_views, intrinsics)
    test_ids = set(np.linspace(0, len(cameras) - 1, test_views).round().astype(int).tolist()) if test_views else set()
    train_cams = [c for i, c in enumerate(cameras) if i not in test_ids]
    test_cams = [c for i, c in enumerate(cameras) if i in test_ids]
    logger.info(f"Synthesizing '{scene_name}' with {blur} blur: {len(train_cams)} train / {len(test_cams)} test views")

    train_images = []
    for index, camera in enumerate(train_cams):
        view_rng = np.random.default_rng([seed, index])
        if blur == "motion":
            linear = synth_motion_blur(scene, camera, motion, rng=view_rng, steps=steps)
        elif blur == "defocus":
            linear = synth_defocus_blur(scene, camera, defocus, rng=view_rng, steps=steps)
        else:
            linear = render_reference(scene, camera, steps)
        train_images.append(gamma_encode(linear))
        logger.debug(f"Training view {index} synthesized")
    test_images = [gamma_encode(render_reference(scene, camera, steps)) for camera in test_cams]

    return Dataset(
        intrinsics=intrinsics,
        train_images=np.stack(train_images).astype(np.float32),
        train_poses=np.stack([c.pose for c in train_cams]),
        test_images=(np.stack(test_images).astype(np.float32) if test_images
                     else np.zeros((0, height, width, 3), dtype=np.float32)),
        test_poses=(np.stack([c.pose for c in test_cams]) if test_cams else np.zeros((0, 3, 4))),
        near=scene.near,
        far=scene.far,
        meta={"blur_type": blur, "seed": str(seed), "scene": scene_name},
    )

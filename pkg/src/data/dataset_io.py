# -*- coding: utf-8 -*-
"""
Dataset container and its on-disk directory format.

Layout:
    intrinsics.txt      fx fy cx cy width height
    poses_train.txt     one view per line, 12 reals, row-major 3x4 camera-to-world
    poses_test.txt      same, for held-out views
    train/NNN.png       blurry 8-bit gamma-encoded inputs
    test_sharp/NNN.png  sharp 8-bit gamma-encoded ground truth
    meta.txt            key = value lines (near, far, blur_type, seed, scene)
"""

import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from config import read_key_value_file
from src.errors import DatasetError, ParseError
from src.nerf.renderer import CameraBatch, Intrinsics
from src.utils.image_io import read_png, write_png

# Logger configuration
logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass
class Dataset:
    """Training views (blurry), held-out sharp views and shared camera metadata.

    Images are display-space (gamma-encoded) float32 arrays in [0, 1], shaped
    (views, height, width, 3). Poses are (views, 3, 4) camera-to-world.
    """

    intrinsics: Intrinsics
    train_images: np.ndarray
    train_poses: np.ndarray
    test_images: np.ndarray
    test_poses: np.ndarray
    near: float
    far: float
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.train_images.shape[0] != self.train_poses.shape[0]:
            raise DatasetError(
                f"{self.train_images.shape[0]} training images but {self.train_poses.shape[0]} poses"
            )
        if self.test_images.shape[0] != self.test_poses.shape[0]:
            raise DatasetError(
                f"{self.test_images.shape[0]} test images but {self.test_poses.shape[0]} poses"
            )
        expected = (self.intrinsics.height, self.intrinsics.width, 3)
        for images in (self.train_images, self.test_images):
            if images.shape[0] and images.shape[1:] != expected:
                raise DatasetError(f"image shape {images.shape[1:]} does not match intrinsics {expected}")

    @property
    def num_train(self) -> int:
        return self.train_images.shape[0]

    def train_cameras(self) -> CameraBatch:
        return CameraBatch.from_poses(self.train_poses, self.intrinsics)

    def test_cameras(self) -> CameraBatch:
        return CameraBatch.from_poses(self.test_poses, self.intrinsics)


def format_poses(poses: np.ndarray) -> str:
    lines = [" ".join(f"{v:.17g}" for v in pose.reshape(12)) for pose in np.asarray(poses).reshape(-1, 3, 4)]
    return "\n".join(lines) + ("\n" if lines else "")


def read_poses(path: PathLike) -> np.ndarray:
    """Parses a poses file into a (views, 3, 4) array."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(path, "file not found")
    poses = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 12:
                raise ParseError(path, f"expected 12 values, got {len(fields)}", number)
            try:
                poses.append(np.array([float(v) for v in fields]).reshape(3, 4))
            except ValueError:
                raise ParseError(path, "non-numeric pose value", number) from None
    return np.stack(poses) if poses else np.zeros((0, 3, 4))


def read_intrinsics(path: PathLike) -> Intrinsics:
    path = Path(path)
    if not path.is_file():
        raise ParseError(path, "file not found")
    with open(path, "r", encoding="utf-8") as f:
        lines = [(n, line) for n, line in enumerate(f, start=1) if line.strip()]
    if len(lines) != 1:
        raise ParseError(path, f"expected exactly one line, got {len(lines)}")
    number, line = lines[0]
    fields = line.split()
    if len(fields) != 6:
        raise ParseError(path, f"expected 'fx fy cx cy width height', got {len(fields)} values", number)
    try:
        fx, fy, cx, cy = (float(v) for v in fields[:4])
        width, height = int(fields[4]), int(fields[5])
    except ValueError:
        raise ParseError(path, "malformed intrinsics value", number) from None
    return Intrinsics(fx, fy, cx, cy, width, height)


def read_meta(path: PathLike) -> Dict[str, str]:
    """Parses ``key = value`` lines; ``#`` starts a comment."""
    return read_key_value_file(path)


def _read_images(folder: Path, count: int) -> np.ndarray:
    images = []
    for index in range(count):
        path = folder / f"{index:03d}.png"
        if not path.is_file():
            raise DatasetError(f"missing image {path}")
        images.append(read_png(path))
    return np.stack(images) if images else np.zeros((0, 0, 0, 3), dtype=np.float32)


def write_dataset(dataset: Dataset, out_dir: PathLike, overwrite: bool = False) -> Path:
    """Writes the dataset directory atomically.

    Files are assembled in a sibling temporary directory that is renamed into
    place only after every file was written.
    """
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise DatasetError(f"output directory {out_dir} exists and is not empty")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = out_dir.parent / f".{out_dir.name}.partial-{os.getpid()}"
    if staging.exists():
        shutil.rmtree(staging)

    try:
        (staging / "train").mkdir(parents=True)
        (staging / "test_sharp").mkdir()
        intr = dataset.intrinsics
        (staging / "intrinsics.txt").write_text(
            f"{intr.fx:.17g} {intr.fy:.17g} {intr.cx:.17g} {intr.cy:.17g} {intr.width} {intr.height}\n",
            encoding="utf-8")
        (staging / "poses_train.txt").write_text(format_poses(dataset.train_poses), encoding="utf-8")
        (staging / "poses_test.txt").write_text(format_poses(dataset.test_poses), encoding="utf-8")
        meta = {"near": f"{dataset.near:.17g}", "far": f"{dataset.far:.17g}"}
        meta.update({k: v for k, v in dataset.meta.items() if k not in meta})
        (staging / "meta.txt").write_text("".join(f"{k} = {v}\n" for k, v in meta.items()), encoding="utf-8")
        for index, image in enumerate(dataset.train_images):
            write_png(staging / "train" / f"{index:03d}.png", image)
        for index, image in enumerate(dataset.test_images):
            write_png(staging / "test_sharp" / f"{index:03d}.png", image)

        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(staging, out_dir)
    except Exception:
        shutil.rmtree(staging, ignore_errors=True)
        raise

    logger.info(f"Dataset written to {out_dir} ({dataset.num_train} train / {dataset.test_images.shape[0]} test views)")
    return out_dir


def read_dataset(directory: PathLike) -> Dataset:
    """Loads a dataset directory written by ``write_dataset``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"dataset directory {directory} does not exist")
    intrinsics = read_intrinsics(directory / "intrinsics.txt")
    train_poses = read_poses(directory / "poses_train.txt")
    test_path = directory / "poses_test.txt"
    test_poses = read_poses(test_path) if test_path.exists() else np.zeros((0, 3, 4))
    meta_path = directory / "meta.txt"
    meta = read_meta(meta_path)
    for key in ("near", "far"):
        if key not in meta:
            raise ParseError(meta_path, f"missing key '{key}'")
    try:
        near, far = float(meta.pop("near")), float(meta.pop("far"))
    except ValueError:
        raise ParseError(meta_path, "near/far must be numbers") from None

    train_images = _read_images(directory / "train", train_poses.shape[0])
    test_images = _read_images(directory / "test_sharp", test_poses.shape[0])
    if test_images.shape[0] == 0:
        test_images = np.zeros((0, intrinsics.height, intrinsics.width, 3), dtype=np.float32)
    logger.info(f"Dataset loaded from {directory}: {train_poses.shape[0]} train / {test_poses.shape[0]} test views")
    return Dataset(intrinsics, train_images, train_poses, test_images, test_poses, near, far, meta)


def list_images(directory: PathLike) -> List[Path]:
    """Sorted PNG files of a directory."""
    return sorted(Path(directory).glob("*.png"))

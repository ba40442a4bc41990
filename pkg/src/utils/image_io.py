# -*- coding: utf-8 -*-
"""
8-bit PNG reading and writing for display-space (gamma-encoded) images.
"""

import logging
from pathlib import Path
from typing import Union

import matplotlib.image as mpimg
import numpy as np

# Logger configuration
logger = logging.getLogger(__name__)


def quantize(image: np.ndarray) -> np.ndarray:
    """Display values in [0, 1] to uint8, rounding to nearest."""
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path: Union[str, Path], image: np.ndarray) -> None:
    """Writes a (height, width, 3) display-space image as an 8-bit PNG."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {image.shape}")
    mpimg.imsave(str(path), quantize(image), format="png")


def read_png(path: Union[str, Path]) -> np.ndarray:
    """Reads an 8-bit PNG as float32 display values in [0, 1], shape (height, width, 3)."""
    image = mpimg.imread(str(path), format="png")
    if image.dtype == np.uint8:
        image = image.astype(np.float32) / 255.0
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=-1)
    return np.ascontiguousarray(image[..., :3], dtype=np.float32)

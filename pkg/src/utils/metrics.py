# -*- coding: utf-8 -*-
"""
Image quality metrics: PSNR and single-scale SSIM on display values in [0, 1].
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from src.errors import DatasetError, ShapeError
from src.utils.image_io import read_png

# Logger configuration
logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
MSE_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
LUMA = np.array([0.299, 0.587, 0.114])


def _check_pair(name: str, a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(name, (a.shape, b.shape), "images must have equal dimensions")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) in dB, capped at 99 when the images are (nearly) identical."""
    a, b = _check_pair("psnr", a, b)
    if float(np.mean((a - b) ** 2)) < MSE_FLOOR:
        return PSNR_CAP
    value = peak_signal_noise_ratio(a, b, data_range=1.0)
    return float(np.clip(value, 0.0, PSNR_CAP))


def to_luma(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    return image @ LUMA if image.ndim == 3 else image


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over luma with an 11-tap Gaussian window (sigma 1.5).

    Raises:
        ShapeError: If the images differ in size.
        ValueError: If either side is shorter than the window.
    """
    a, b = _check_pair("ssim", a, b)
    a, b = to_luma(a), to_luma(b)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    return float(structural_similarity(
        a, b, gaussian_weights=True, sigma=SSIM_SIGMA, use_sample_covariance=False, data_range=1.0,
    ))


@dataclass
class MetricsReport:
    """Per-image PSNR/SSIM rows (columns image, psnr, ssim)."""

    rows: pd.DataFrame

    @property
    def mean_psnr(self) -> float:
        return float(self.rows["psnr"].mean())

    @property
    def mean_ssim(self) -> float:
        return float(self.rows["ssim"].mean())

    def to_frame(self) -> pd.DataFrame:
        """The rows followed by a ``mean`` row."""
        mean_row = pd.DataFrame([{"image": "mean", "psnr": self.mean_psnr, "ssim": self.mean_ssim}])
        return pd.concat([self.rows, mean_row], ignore_index=True)

    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        """Formats the table as CSV; also writes it when ``path`` is given."""
        text = self.to_frame().to_csv(index=False, float_format="%.6f")
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
            logger.info(f"Metrics table written to {path}")
        return text


def evaluate_images(names, predicted, ground_truth) -> MetricsReport:
    rows = [{"image": name, "psnr": psnr(p, g), "ssim": ssim(p, g)}
            for name, p, g in zip(names, predicted, ground_truth)]
    return MetricsReport(pd.DataFrame(rows, columns=["image", "psnr", "ssim"]))


def evaluate_directories(pred_dir: Union[str, Path], gt_dir: Union[str, Path]) -> MetricsReport:
    """Compares every PNG of ``gt_dir`` with the same-named PNG of ``pred_dir``.

    Raises:
        DatasetError: If a directory is missing, empty, or the file sets differ.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for directory in (pred_dir, gt_dir):
        if not directory.is_dir():
            raise DatasetError(f"image directory {directory} does not exist")
    gt_names = sorted(p.name for p in gt_dir.glob("*.png"))
    pred_names = sorted(p.name for p in pred_dir.glob("*.png"))
    if not gt_names:
        raise DatasetError(f"no PNG images in {gt_dir}")
    if gt_names != pred_names:
        missing = sorted(set(gt_names) ^ set(pred_names))
        raise DatasetError(f"image sets of {pred_dir} and {gt_dir} differ: {missing}")
    report = evaluate_images(gt_names,
                             (read_png(pred_dir / n) for n in gt_names),
                             (read_png(gt_dir / n) for n in gt_names))
    logger.info(f"Evaluated {len(gt_names)} images: PSNR {report.mean_psnr:.3f} dB, SSIM {report.mean_ssim:.4f}")
    return report

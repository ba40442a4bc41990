# -*- coding: utf-8 -*-
"""
Matplotlib figures written next to training and inspection outputs.
"""

import logging
from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

# Logger configuration
logger = logging.getLogger(__name__)


def plot_loss_curve(history: pd.DataFrame, path: Union[str, Path], window: int = 50) -> Path:
    """Plots total and reconstruction loss against the iteration.

    Args:
        history: Loss log with columns iteration, loss, rec, align, lr.
        path: Output PNG path.
        window: Rolling-mean window drawn over the raw curve.

    Returns:
        The path of the written figure.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(8, 4), dpi=100)
    if not history.empty:
        ax.plot(history["iteration"], history["loss"], color="tab:blue", alpha=0.3, linewidth=1, label="loss")
        smoothed = history["loss"].rolling(window, min_periods=1).mean()
        ax.plot(history["iteration"], smoothed, color="tab:blue", linewidth=2, label=f"loss (mean of {window})")
        ax.plot(history["iteration"], history["rec"].rolling(window, min_periods=1).mean(),
                "r--", linewidth=1.5, label="reconstruction")
        if (history["loss"] > 0).all():
            ax.set_yscale("log")
    ax.xaxis.set_major_locator(MaxNLocator(10, integer=True))
    ax.set_xlabel("Iteration", fontsize=10)
    ax.set_ylabel("Loss", fontsize=10)
    ax.grid(True, linestyle="--", alpha=0.7)
    ax.legend(loc="best", frameon=True)
    fig.tight_layout(pad=2.0)
    fig.savefig(path, format="png", bbox_inches="tight")
    plt.close(fig)
    logger.info(f"Loss curve saved at: {path}")
    return path


def plot_kernel_points(targets: np.ndarray, pixels: np.ndarray, weights: np.ndarray,
                       width: int, height: int, path: Union[str, Path],
                       background: np.ndarray = None, title: str = "") -> Path:
    """Draws every target pixel with its deformed kernel points.

    Point area is proportional to the blend weight; the anchor point is drawn
    in a distinct color and linked to its target pixel.

    Args:
        targets: (batch, 2) target pixel coordinates.
        pixels: (batch, N, 2) deformed kernel pixel coordinates.
        weights: (batch, N) blend weights.
        width: Image width in pixels.
        height: Image height in pixels.
        path: Output PNG path.
        background: Optional (height, width, 3) display image drawn underneath.
        title: Figure title.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 6 * height / width), dpi=100)
    if background is not None:
        ax.imshow(np.clip(background, 0.0, 1.0), extent=(0, width, height, 0), alpha=0.6)
    sizes = 400.0 * weights
    ax.scatter(pixels[:, 1:, 0].ravel(), pixels[:, 1:, 1].ravel(), s=sizes[:, 1:].ravel(),
               c="tab:orange", alpha=0.8, edgecolors="none", label="kernel points")
    ax.scatter(pixels[:, 0, 0], pixels[:, 0, 1], s=sizes[:, 0], c="tab:red",
               alpha=0.9, edgecolors="none", label="anchor")
    ax.scatter(targets[:, 0], targets[:, 1], marker="+", c="black", s=30, label="target pixel")
    for target, anchor in zip(targets, pixels[:, 0]):
        ax.plot([target[0], anchor[0]], [target[1], anchor[1]], color="tab:red", linewidth=0.8)
    ax.set_xlim(0, width)
    ax.set_ylim(height, 0)
    ax.set_aspect("equal")
    ax.set_xlabel("x (px)", fontsize=10)
    ax.set_ylabel("y (px)", fontsize=10)
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(loc="upper right", fontsize=8, frameon=True)
    fig.tight_layout()
    fig.savefig(path, format="png", bbox_inches="tight")
    plt.close(fig)
    logger.info(f"Kernel visualization saved at: {path}")
    return path

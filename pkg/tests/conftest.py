# -*- coding: utf-8 -*-
"""
Shared fixtures for the test suite.
"""

import os
import sys

import numpy as np
import pytest

# Make the repository root importable (src, config, main)
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from config import config as config_module  # noqa: E402
from src.autodiff import precision, reset_tape  # noqa: E402
from src.data.synth import MotionBlurSpec, synthesize_dataset  # noqa: E402
from src.training.trainer import TrainConfig  # noqa: E402

RUN_SLOW = os.getenv("DEBLUR_NERF_RUN_SLOW") == "1"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long end-to-end runs, enabled with DEBLUR_NERF_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="set DEBLUR_NERF_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def clean_state(tmp_path, monkeypatch):
    """Fresh tape, private log folder and no cached configuration for every test."""
    monkeypatch.setenv("DEBLUR_NERF_LOG_DIR", str(tmp_path / "logs"))
    config_module.clear_config_cache()
    reset_tape()
    yield
    reset_tape()
    config_module.clear_config_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def float64():
    """Runs the test body with float64 tensors."""
    with precision(np.float64):
        yield


@pytest.fixture(scope="session")
def tiny_dataset():
    """Three blurry 16x16 training views and one sharp test view."""
    return synthesize_dataset(scene_name="blobs", blur="motion", views=3, width=16, height=16,
                              seed=3, test_views=1, motion=MotionBlurSpec(num_poses=2), steps=64)


@pytest.fixture
def tiny_config():
    """A training configuration small enough for unit tests."""
    return TrainConfig(
        iterations=8, rays_per_batch=16, num_samples=8, num_points=3, seed=5,
        log_every=2, checkpoint_every=4, embedding_dim=4, kernel_hidden=16, kernel_depth=2,
        field_width=16, field_depth=2, position_freqs=3, direction_freqs=1,
    )

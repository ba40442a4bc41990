# -*- coding: utf-8 -*-
"""
Configuration module for the deblurring pipeline.

This module manages loading configurations from a JSON file
and provides default values for configuration parameters.
It also reads the line-based key = value files used for training runs.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from src.errors import ParseError

# Logger configuration
logger = logging.getLogger(__name__)

# Default values
DEFAULT_CONFIG = {
    "synth_scene": "blobs",
    "synth_blur": "motion",
    "synth_views": 16,
    "synth_test_views": 4,
    "synth_width": 64,
    "synth_height": 64,
    "synth_seed": 0,
    "synth_reference_steps": 128,
    "motion_max_angle": 0.05,
    "motion_max_translation": 0.15,
    "motion_num_poses": 9,
    "defocus_aperture": 0.12,
    "defocus_lens_samples": 16,
    "render_num_samples": None,
    "render_chunk": 4096,
    "train_options": {},
}

# Path to the configuration file
CONFIG_FILE_PATH = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "config.json"
)


def _positive_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value > 0


def _non_negative_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and value >= 0


def _name(value: Any) -> bool:
    return isinstance(value, str) and bool(value.strip())


# Section, key and validator of every recognized scalar option
_OPTIONS: Dict[str, Tuple[str, Callable[[Any], bool]]] = {
    "synth_scene": ("synth", _name),
    "synth_blur": ("synth", lambda v: v in ("motion", "defocus", "none")),
    "synth_views": ("synth", _positive_int),
    "synth_test_views": ("synth", lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0),
    "synth_width": ("synth", _positive_int),
    "synth_height": ("synth", _positive_int),
    "synth_seed": ("synth", lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0),
    "synth_reference_steps": ("synth", lambda v: _positive_int(v) and v >= 64),
    "motion_max_angle": ("synth", _non_negative_number),
    "motion_max_translation": ("synth", _non_negative_number),
    "motion_num_poses": ("synth", _positive_int),
    "defocus_aperture": ("synth", _non_negative_number),
    "defocus_lens_samples": ("synth", _positive_int),
    "render_num_samples": ("render", lambda v: v is None or _positive_int(v)),
    "render_chunk": ("render", _positive_int),
}


def config_file_path() -> str:
    """Path of the JSON configuration; DEBLUR_NERF_CONFIG overrides the packaged file."""
    return os.environ.get("DEBLUR_NERF_CONFIG") or CONFIG_FILE_PATH


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Loads the configuration from the JSON file if it exists, otherwise uses the default values.

    Invalid values are reported with a warning and replaced by their default.
    The ``train`` and ``dsk`` sections are merged into ``train_options`` and
    validated later by the training configuration.

    Args:
        path: Configuration file; defaults to ``config_file_path()``.

    Returns:
        Dictionary containing the configuration.
    """
    config = DEFAULT_CONFIG.copy()
    config["train_options"] = {}
    path = path or config_file_path()

    try:
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as config_file:
                user_config = json.load(config_file)

            for key, (section, is_valid) in _OPTIONS.items():
                values = user_config.get(section, {})
                if key not in values:
                    continue
                if is_valid(values[key]):
                    config[key] = values[key]
                    logger.debug(f"{key} set to: {config[key]}")
                else:
                    logger.warning(
                        f"Invalid value for {key}: {values[key]!r}. Using default value: {DEFAULT_CONFIG[key]!r}"
                    )

            for section in ("train", "dsk"):
                options = user_config.get(section, {})
                if isinstance(options, dict):
                    config["train_options"].update(options)
                else:
                    logger.warning(f"Section '{section}' must be an object, ignoring it")

            logger.info(f"Configuration successfully loaded from {path}")
        else:
            logger.info(f"Configuration file not found at {path}, using default values")
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error while loading configuration: {str(e)}")
        logger.info("Using default values")

    return config


def read_key_value_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Parses ``key = value`` lines; ``#`` starts a comment and blank lines are skipped.

    Args:
        path: The file to read.

    Returns:
        Mapping of keys to raw string values, in file order.

    Raises:
        ParseError: If the file is missing or a line is malformed (with its number).
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(path, "file not found")
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError(path, f"expected 'key = value', got '{text}'", number)
            key, value = (part.strip() for part in text.split("=", 1))
            if not key:
                raise ParseError(path, "empty key", number)
            values[key] = value
    return values


# Global variable to store cached configuration
_config_cache = None


def get_config_value(key: str, default: Any = None) -> Any:
    """
    Gets a specific value from the configuration.

    Args:
        key: The key of the value to get.
        default: The default value to return if the key does not exist.

    Returns:
        The configuration value or the default value.
    """
    global _config_cache

    # If the configuration has not been loaded yet, load it
    if _config_cache is None:
        _config_cache = load_config()
        logger.debug("Configuration loaded into cache")

    return _config_cache.get(key, default)


def clear_config_cache() -> None:
    """Forgets the cached configuration so the next lookup reloads it."""
    global _config_cache
    _config_cache = None

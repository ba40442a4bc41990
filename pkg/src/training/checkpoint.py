# -*- coding: utf-8 -*-
"""
Checkpoint file format.

    DSKNERF-CKPT\\n
    <one line of JSON manifest>\\n
    <little-endian float32 payload, tensors concatenated in manifest order>

The manifest holds the version tag, the iteration counter, an echo of the
training configuration, free-form metadata and the name and shape of every
tensor.
"""

import json
import logging
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from src.errors import CheckpointError

# Logger configuration
logger = logging.getLogger(__name__)

MAGIC = b"DSKNERF-CKPT\n"
VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    """Named float32 tensors plus configuration echo and metadata."""

    tensors: "OrderedDict[str, np.ndarray]"
    iteration: int = 0
    config: Dict[str, Any] = field(default_factory=dict)
    meta: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    """Writes the checkpoint atomically (temporary file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": VERSION,
        "iteration": int(checkpoint.iteration),
        "config": checkpoint.config,
        "meta": checkpoint.meta,
        "tensors": [{"name": name, "shape": list(np.shape(array))}
                    for name, array in checkpoint.tensors.items()],
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    staging = path.with_name(f".{path.name}.partial-{os.getpid()}")
    try:
        with open(staging, "wb") as f:
            f.write(MAGIC)
            f.write(header + b"\n")
            for array in checkpoint.tensors.values():
                f.write(np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes())
        os.replace(staging, path)
    except OSError as e:
        if staging.exists():
            staging.unlink()
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"Checkpoint saved to {path} at iteration {checkpoint.iteration}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Reads and fully validates a checkpoint before returning anything."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file")
    end = blob.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(blob[len(MAGIC):end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: malformed manifest ({e})") from e

    if not isinstance(manifest, dict):
        raise CheckpointError(f"{path}: manifest is not an object")
    version = manifest.get("version")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}, expected {VERSION}")

    payload = blob[end + 1:]
    entries = manifest.get("tensors", [])
    try:
        expected = sum(int(np.prod(e["shape"], dtype=np.int64)) for e in entries) * PAYLOAD_DTYPE.itemsize
        names = [str(e["name"]) for e in entries]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed tensor table ({e})") from e
    if len(set(names)) != len(names):
        raise CheckpointError(f"{path}: duplicate tensor names")
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: payload has {len(payload)} bytes but the manifest describes {expected}"
        )

    tensors = OrderedDict()
    offset = 0
    for entry in entries:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        size = count * PAYLOAD_DTYPE.itemsize
        array = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=count, offset=offset)
        tensors[entry["name"]] = array.astype(np.float32).reshape(entry["shape"])
        offset += size
    logger.info(f"Checkpoint loaded from {path} (iteration {manifest.get('iteration', 0)})")
    return Checkpoint(tensors=tensors, iteration=int(manifest.get("iteration", 0)),
                      config=manifest.get("config", {}), meta=manifest.get("meta", {}))

"""Versioned ``.npz`` checkpoints holding parameters, optimiser moments and run state."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "r2i-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointMismatch(ValueError):
    pass


def _encode(obj) -> np.ndarray:
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode(), dtype=np.uint8)


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> Path:
    """Write atomically: the file either holds the old or the complete new checkpoint."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    full_meta = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, **meta}
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, __meta__=_encode(full_meta), **arrays)
    os.replace(tmp, path)
    return path


def load_checkpoint(path, fingerprint: str | None = None) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise CheckpointMismatch(f"{path}: missing metadata")
        meta = json.loads(bytes(data["__meta__"]).decode())
        arrays = {k: data[k] for k in data.files if k != "__meta__"}
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatch(f"{path}: not an r2i checkpoint")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch(f"{path}: checkpoint version {meta.get('version')}, expected {CHECKPOINT_VERSION}")
    if fingerprint is not None and meta.get("fingerprint") != fingerprint:
        raise CheckpointMismatch(
            f"{path}: config fingerprint {meta.get('fingerprint')} does not match {fingerprint}"
        )
    return arrays, meta


def prefixed(prefix: str, state: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}{k}": v for k, v in state.items()}


def unprefixed(prefix: str, arrays: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    n = len(prefix)
    return {k[n:]: v for k, v in arrays.items() if k.startswith(prefix)}

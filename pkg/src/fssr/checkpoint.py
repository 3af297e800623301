"""Self-describing checkpoint container.

A checkpoint is a single ``.npz`` file holding named float arrays (network
parameters and buffers, optimizer moments, step counters) plus one JSON
metadata blob with a format version, the full training configuration echo,
the data-RNG state, and the loss history. Everything needed to resume
training bit-identically on the same platform is inside.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

__all__ = ["CHECKPOINT_VERSION", "Checkpoint", "checkpoint_hash"]

CHECKPOINT_VERSION = 1
_META_KEY = "__meta__"


class Checkpoint:
    """Metadata dict plus named numpy arrays."""

    def __init__(self, meta: dict, arrays: dict[str, np.ndarray]):
        if "format_version" not in meta:
            meta = {"format_version": CHECKPOINT_VERSION, **meta}
        self.meta = meta
        self.arrays = arrays

    def save(self, path) -> None:
        blob = np.frombuffer(json.dumps(self.meta, sort_keys=True).encode(), dtype=np.uint8)
        np.savez(path, **{_META_KEY: blob}, **self.arrays)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with np.load(path) as data:
            if _META_KEY not in data:
                raise ValueError(f"not a checkpoint file: {path}")
            meta = json.loads(bytes(data[_META_KEY]).decode())
            if meta.get("format_version") != CHECKPOINT_VERSION:
                raise ValueError(
                    f"unsupported checkpoint version {meta.get('format_version')!r}"
                )
            arrays = {k: data[k] for k in data.files if k != _META_KEY}
        return cls(meta=meta, arrays=arrays)


def checkpoint_hash(path) -> str:
    """SHA-256 of the checkpoint file, used to pin dataset provenance."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

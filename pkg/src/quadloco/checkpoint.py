"""Versioned checkpoint container.

Checkpoints are single files: a fixed magic, a format version, the
SHA-256 of the payload, then the pickled payload. Loading verifies all
three, so truncated or corrupted files are rejected rather than applied
partially. Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import hashlib
import io
import os
import pickle
from pathlib import Path

MAGIC = b"QLCKPT\x00"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = pickle.dumps(payload, protocol=pickle.HIGHEST_PROTOCOL)
    digest = hashlib.sha256(blob).digest()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION.to_bytes(4, "little"))
        fh.write(digest)
        fh.write(blob)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path) -> dict:
    data = Path(path).read_bytes()
    header = len(MAGIC) + 4 + 32
    if len(data) < header or not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    version = int.from_bytes(data[len(MAGIC):len(MAGIC) + 4], "little")
    if version != VERSION:
        raise CheckpointError(f"{path}: version {version}, this build reads version {VERSION}")
    digest = data[len(MAGIC) + 4:header]
    blob = data[header:]
    if hashlib.sha256(blob).digest() != digest:
        raise CheckpointError(f"{path}: payload hash mismatch (corrupted file)")
    return pickle.loads(blob)

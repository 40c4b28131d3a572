"""
CKPT checkpoint codec.

Layout (little-endian):
    magic `CKPT`, u32 version
    u32 length + UTF-8 JSON header {kind, hyperparameters} with sorted keys
    u64 step, u64 seed, u32 record count
    per record, in name order: u16 name length, UTF-8 name, u8 rank, u32 dims, float32 data

Identical content always encodes to identical bytes.
"""
from pathlib import Path
from typing import Dict, Optional, Tuple
import json
import logging
import struct

import numpy as np
import torch
from torch import nn

from gestdiff.core.errors import DataError
from gestdiff.domain.checkpoint_models import ModelCheckpoint
from gestdiff.neural.optim import MOMENT_PREFIX, AdamOptimizer


logger = logging.getLogger(__name__)

MAGIC = b"CKPT"
VERSION = 1


class CheckpointError(DataError):
    """Raised when a checkpoint cannot be read or does not fit the model."""
    pass


def encode_checkpoint(checkpoint: ModelCheckpoint) -> bytes:
    """Serialize a checkpoint; records are written in name order."""
    header = json.dumps(
        {"kind": checkpoint.kind, "hyperparameters": checkpoint.hyperparameters},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<I", len(header)),
        header,
        struct.pack("<QQI", checkpoint.step, checkpoint.seed, len(checkpoint.tensors)),
    ]
    for name in sorted(checkpoint.tensors):
        array = np.ascontiguousarray(checkpoint.tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<B", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.source = source
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointError(
                f"{self.source}: truncated checkpoint (needed {end} bytes, got {len(self.payload)})"
            )
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(payload: bytes, source: str = "<bytes>") -> ModelCheckpoint:
    """
    Parse CKPT bytes.

    Raises:
        CheckpointError: On bad magic, unsupported version, truncation or trailing bytes
    """
    reader = _Reader(payload, source)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic)")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
    (header_length,) = reader.unpack("<I")
    try:
        header = json.loads(reader.take(header_length).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{source}: corrupt header: {e}")
    step, seed, count = reader.unpack("<QQI")

    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_length,) = reader.unpack("<H")
        name = reader.take(name_length).decode("utf-8")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I")
        size = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(reader.take(size * 4), dtype="<f4").reshape(shape).copy()
    if reader.offset != len(payload):
        raise CheckpointError(f"{source}: {len(payload) - reader.offset} trailing bytes after last record")

    return ModelCheckpoint(
        kind=header["kind"],
        hyperparameters=header["hyperparameters"],
        step=step,
        seed=seed,
        tensors=tensors,
    )


def save_checkpoint(path: Path, checkpoint: ModelCheckpoint) -> None:
    Path(path).write_bytes(encode_checkpoint(checkpoint))
    logger.info("Saved %s checkpoint at step %d to %s", checkpoint.kind, checkpoint.step, path)


def load_checkpoint(path: Path, kind: Optional[str] = None) -> ModelCheckpoint:
    """
    Read a checkpoint, optionally insisting on its kind.

    Raises:
        CheckpointError: If the file is missing, malformed or of another kind
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    checkpoint = decode_checkpoint(path.read_bytes(), source=str(path))
    if kind is not None and checkpoint.kind != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {checkpoint.kind}")
    return checkpoint


def capture_state(
    kind: str,
    hyperparameters: Dict,
    step: int,
    seed: int,
    model: nn.Module,
    optimizer: Optional[AdamOptimizer] = None,
) -> ModelCheckpoint:
    """Snapshot a model (and optimizer moments) into a checkpoint."""
    tensors = {name: value.detach().cpu().numpy().astype(np.float32) for name, value in model.state_dict().items()}
    if optimizer is not None:
        tensors.update({name: value.cpu().numpy().astype(np.float32) for name, value in optimizer.moment_tensors().items()})
    return ModelCheckpoint(kind=kind, hyperparameters=hyperparameters, step=step, seed=seed, tensors=tensors)


def restore_state(checkpoint: ModelCheckpoint, model: nn.Module, optimizer: Optional[AdamOptimizer] = None) -> None:
    """
    Load checkpoint tensors into a model built from the same hyperparameters.

    Raises:
        CheckpointError: If parameter names or shapes do not match the model
    """
    state = {
        name: torch.from_numpy(array.copy())
        for name, array in checkpoint.tensors.items()
        if not name.startswith(MOMENT_PREFIX)
    }
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"{checkpoint.kind} checkpoint does not fit the model: {e}")
    if optimizer is not None:
        optimizer.load_moment_tensors({
            name: torch.from_numpy(array.copy())
            for name, array in checkpoint.tensors.items()
            if name.startswith(MOMENT_PREFIX)
        })

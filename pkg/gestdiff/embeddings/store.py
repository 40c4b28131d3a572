"""
Binary embedding files.

Layout: magic `EMB1`, then little-endian u32 {rows, cols, rate_mHz, modality code},
then rows * cols little-endian float32 values in row-major order.
"""
from pathlib import Path
import struct

import numpy as np

from gestdiff.core.errors import DataError
from gestdiff.domain.embedding_models import EmbeddingSequence, Modality


MAGIC = b"EMB1"
HEADER = struct.Struct("<4sIIII")


class EmbeddingFormatError(DataError):
    """Raised when an embedding file does not match the EMB1 format."""
    pass


def encode_embeddings(sequence: EmbeddingSequence) -> bytes:
    """Serialize an embedding sequence to EMB1 bytes."""
    rows, cols = sequence.vectors.shape
    header = HEADER.pack(MAGIC, rows, cols, int(round(sequence.rate * 1000)), sequence.modality.value)
    return header + sequence.vectors.astype("<f4").tobytes(order="C")


def decode_embeddings(payload: bytes, source: str = "<bytes>") -> EmbeddingSequence:
    """
    Parse EMB1 bytes.

    Raises:
        EmbeddingFormatError: On magic mismatch, truncated payload, unknown modality or NaN entries
    """
    if len(payload) < HEADER.size:
        raise EmbeddingFormatError(
            f"{source}: truncated header (expected {HEADER.size} bytes, got {len(payload)})"
        )
    magic, rows, cols, rate_mhz, modality_code = HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"{source}: bad magic {magic!r} (expected {MAGIC!r})")
    expected = HEADER.size + rows * cols * 4
    if len(payload) != expected:
        raise EmbeddingFormatError(
            f"{source}: payload size mismatch (expected {expected} bytes, got {len(payload)})"
        )
    try:
        modality = Modality(modality_code)
    except ValueError:
        raise EmbeddingFormatError(f"{source}: unknown modality code {modality_code}")
    if rate_mhz == 0:
        raise EmbeddingFormatError(f"{source}: rate must be positive")

    vectors = np.frombuffer(payload, dtype="<f4", offset=HEADER.size).reshape(rows, cols)
    if np.isnan(vectors).any():
        raise EmbeddingFormatError(f"{source}: embedding matrix contains NaN entries")
    return EmbeddingSequence(rate=rate_mhz / 1000.0, vectors=vectors.astype(np.float64), modality=modality)


def load_embeddings(path: Path) -> EmbeddingSequence:
    """Read an EMB1 embedding file."""
    return decode_embeddings(Path(path).read_bytes(), source=str(path))


def save_embeddings(path: Path, sequence: EmbeddingSequence) -> None:
    """Write an EMB1 embedding file (values stored as float32)."""
    Path(path).write_bytes(encode_embeddings(sequence))

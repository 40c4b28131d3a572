"""
Domain models for embedding streams, timed transcripts and aligned clips.
"""
from typing import List, Dict, Any, Optional, Tuple
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from gestdiff.core.errors import DataError
from gestdiff.domain.motion_models import PoseSequence


class EmbeddingError(DataError):
    """Raised when an embedding stream violates an invariant."""
    pass


class Modality(Enum):
    """Embedding stream kinds; values are the on-disk modality codes."""
    AUDIO = 0
    TEXT = 1
    JOINT = 2
    CONDITIONING = 3


@dataclass(frozen=True)
class EmbeddingSequence:
    """T x d real feature vectors sampled at a fixed rate."""
    rate: float
    vectors: np.ndarray
    modality: Modality

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        if self.rate <= 0:
            raise EmbeddingError(f"Embedding rate must be positive (got: {self.rate})")
        if vectors.ndim != 2 or vectors.shape[1] == 0:
            raise EmbeddingError(f"Embeddings must be a T x d matrix with d > 0 (got shape {vectors.shape})")
        if not np.all(np.isfinite(vectors)):
            raise EmbeddingError("Embeddings contain non-finite entries")

    @property
    def frame_count(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def truncated(self, length: int) -> "EmbeddingSequence":
        return EmbeddingSequence(rate=self.rate, vectors=self.vectors[:length], modality=self.modality)


@dataclass(frozen=True)
class TimedToken:
    """One transcript token with its time span in seconds."""
    text: str
    start: float
    end: float


@dataclass(frozen=True)
class TimedTranscript:
    """Word-timed transcription, tokens sorted by start time."""
    tokens: Tuple[TimedToken, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for token in self.tokens:
            if token.start > token.end:
                raise EmbeddingError(f"Token '{token.text}' has start {token.start} after end {token.end}")
        starts = [token.start for token in self.tokens]
        if starts != sorted(starts):
            raise EmbeddingError("Transcript tokens must be sorted by start time")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class AlignedClip:
    """
    Main-agent motion and per-agent speech streams on one frame grid.

    Speech streams are per-frame concatenations [audio | text]. Motion is absent
    when the clip is assembled for synthesis.
    """
    clip_id: str
    rate: float
    main_speech: np.ndarray  # T x 2d
    interlocutor_speech: np.ndarray  # T x 2d
    main_motion: Optional[PoseSequence] = None

    def __post_init__(self):
        for name in ("main_speech", "interlocutor_speech"):
            array = np.array(getattr(self, name), dtype=np.float64)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if self.main_speech.shape != self.interlocutor_speech.shape:
            raise EmbeddingError(
                f"Speech streams differ in shape: {self.main_speech.shape} vs {self.interlocutor_speech.shape}"
            )
        if self.main_motion is not None and self.main_motion.frame_count != self.frame_count:
            raise EmbeddingError(
                f"Motion has {self.main_motion.frame_count} frames, speech has {self.frame_count}"
            )

    @property
    def frame_count(self) -> int:
        return self.main_speech.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        """Summary for logs and JSON manifests."""
        return {
            "clip_id": self.clip_id,
            "rate": self.rate,
            "frames": self.frame_count,
            "speech_dim": self.main_speech.shape[1],
            "motion_dim": None if self.main_motion is None else self.main_motion.frames.shape[1],
        }

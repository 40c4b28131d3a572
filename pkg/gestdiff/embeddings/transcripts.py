"""
Word-timed transcripts: parsing, speech intervals and per-frame token replication.
"""
from pathlib import Path
from typing import List
import logging
import math

import numpy as np

from gestdiff.core.errors import DataError
from gestdiff.domain.embedding_models import EmbeddingError, EmbeddingSequence, Modality, TimedToken, TimedTranscript
from gestdiff.domain.signal_models import SpeechIntervals


logger = logging.getLogger(__name__)


class TranscriptError(DataError):
    """Raised when a transcript file is malformed."""
    pass


def parse_transcript(text: str, source: str = "<transcript>") -> TimedTranscript:
    """
    Parse `start<TAB>end<TAB>token` lines. Blank lines are skipped.

    Tokens are sorted by start time (stable, so file order breaks ties).

    Raises:
        TranscriptError: On a malformed line, with its line number
    """
    tokens: List[TimedToken] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 3:
            raise TranscriptError(f"{source}:{line_number}: expected 3 tab-separated fields, got {len(parts)}")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError:
            raise TranscriptError(f"{source}:{line_number}: invalid time value in '{line.strip()}'")
        if not (math.isfinite(start) and math.isfinite(end)) or start > end:
            raise TranscriptError(f"{source}:{line_number}: invalid span [{parts[0]}, {parts[1]}]")
        tokens.append(TimedToken(text=parts[2], start=start, end=end))
    tokens.sort(key=lambda token: token.start)
    return TimedTranscript(tokens=tuple(tokens))


def read_transcript(path: Path) -> TimedTranscript:
    """Read a UTF-8 transcript file."""
    return parse_transcript(Path(path).read_text(encoding="utf-8"), source=str(path))


def speech_intervals_from_transcript(transcript: TimedTranscript) -> SpeechIntervals:
    """Merge token spans into normalized speech intervals; zero-length tokens are ignored."""
    return SpeechIntervals(
        intervals=tuple((token.start, token.end) for token in transcript.tokens if token.start < token.end)
    )


def frame_index(seconds: float, rate: float) -> int:
    """Round-half-up frame index of a time."""
    return int(math.floor(seconds * rate + 0.5))


def replicate_tokens(
    transcript: TimedTranscript,
    token_vectors: np.ndarray,
    rate: float,
    frame_count: int,
) -> EmbeddingSequence:
    """
    Spread per-token vectors over the frames each token spans.

    Frame f in [round(start * rate), round(end * rate)) carries the token's
    vector. Tokens are applied in start order so the later-starting token owns
    any overlap. Frames without a token are zero. Spans beyond the clip are
    clipped.

    Args:
        transcript: Timed tokens
        token_vectors: One row per token
        rate: Frame rate in Hz
        frame_count: Output length T

    Returns:
        TEXT EmbeddingSequence of exactly T frames

    Raises:
        EmbeddingError: If the vector count differs from the token count
    """
    token_vectors = np.asarray(token_vectors, dtype=np.float64)
    if token_vectors.ndim != 2 or token_vectors.shape[0] != len(transcript):
        raise EmbeddingError(
            f"Expected one vector per token ({len(transcript)} tokens, got shape {token_vectors.shape})"
        )
    frames = np.zeros((frame_count, token_vectors.shape[1]))
    for token, vector in zip(transcript.tokens, token_vectors):
        first = min(max(frame_index(token.start, rate), 0), frame_count)
        last = min(max(frame_index(token.end, rate), 0), frame_count)
        frames[first:last] = vector
    return EmbeddingSequence(rate=rate, vectors=frames, modality=Modality.TEXT)

"""
Bring per-agent speech streams and motion onto one frame grid.
"""
from typing import Optional
import logging

import numpy as np

from gestdiff.core.errors import DataError
from gestdiff.domain.embedding_models import AlignedClip, EmbeddingSequence
from gestdiff.domain.motion_models import PoseSequence
from gestdiff.dsp.resampling import resample_polyphase


logger = logging.getLogger(__name__)

RATE_TOLERANCE = 1e-6


class AlignmentError(DataError):
    """Raised when streams cannot be aligned into one clip."""
    pass


def resample_embeddings(sequence: EmbeddingSequence, rate: float) -> EmbeddingSequence:
    """Polyphase-resample an embedding stream to `rate` (e.g. 50 Hz audio features to 30 Hz)."""
    if abs(sequence.rate - rate) <= RATE_TOLERANCE:
        return sequence
    vectors = resample_polyphase(sequence.vectors, sequence.rate, rate)
    return EmbeddingSequence(rate=rate, vectors=vectors, modality=sequence.modality)


def align_clip(
    clip_id: str,
    main_motion: Optional[PoseSequence],
    main_audio: EmbeddingSequence,
    main_text: EmbeddingSequence,
    interlocutor_audio: EmbeddingSequence,
    interlocutor_text: EmbeddingSequence,
) -> AlignedClip:
    """
    Truncate all streams to their common length and join audio and text per agent.

    Each agent's speech stream is [audio | text] per frame, so with 768-d
    inputs columns 0..767 hold audio and 768..1535 hold text. Motion may be
    omitted when assembling a clip for synthesis.

    Raises:
        AlignmentError: If a stream is empty, rates differ, or audio and text widths differ
    """
    streams = {
        "main audio": main_audio,
        "main text": main_text,
        "interlocutor audio": interlocutor_audio,
        "interlocutor text": interlocutor_text,
    }
    rate = main_audio.rate
    lengths = {name: stream.frame_count for name, stream in streams.items()}
    for name, stream in streams.items():
        if abs(stream.rate - rate) > RATE_TOLERANCE:
            raise AlignmentError(f"{clip_id}: {name} stream is at {stream.rate} Hz, expected {rate} Hz")
    if main_motion is not None:
        if abs(main_motion.frame_rate - rate) > RATE_TOLERANCE:
            raise AlignmentError(f"{clip_id}: motion is at {main_motion.frame_rate} Hz, expected {rate} Hz")
        lengths["main motion"] = main_motion.frame_count
    if main_audio.dim != main_text.dim or interlocutor_audio.dim != interlocutor_text.dim:
        raise AlignmentError(f"{clip_id}: audio and text embeddings differ in width")

    empty = [name for name, length in lengths.items() if length < 1]
    if empty:
        raise AlignmentError(f"{clip_id}: streams shorter than one frame: {', '.join(empty)}")

    length = min(lengths.values())
    if len(set(lengths.values())) > 1:
        logger.debug("Clip %s truncated to %d frames (lengths: %s)", clip_id, length, lengths)

    return AlignedClip(
        clip_id=clip_id,
        rate=rate,
        main_speech=np.concatenate([main_audio.vectors[:length], main_text.vectors[:length]], axis=1),
        interlocutor_speech=np.concatenate(
            [interlocutor_audio.vectors[:length], interlocutor_text.vectors[:length]], axis=1
        ),
        main_motion=None if main_motion is None else main_motion.truncated(length),
    )

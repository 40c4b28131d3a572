"""
Per-frame conditioning features for the diffusion model.
"""
from typing import Optional
import logging

import numpy as np
import torch

from gestdiff.csmp.model import CsmpError, CsmpModel
from gestdiff.csmp.windows import chunk_windows
from gestdiff.domain.embedding_models import AlignedClip, EmbeddingSequence, Modality


logger = logging.getLogger(__name__)


@torch.no_grad()
def speech_frame_features(stream: np.ndarray, model: CsmpModel, hop: int) -> np.ndarray:
    """
    Projected per-frame speech-text features of a whole stream.

    The stream is chunked into context-length windows; frames covered by
    several windows get the mean of those windows' outputs.

    Returns:
        T x projection_dim array
    """
    windows = chunk_windows(stream, model.context_length, hop)
    values = torch.as_tensor(np.stack([window.values for window in windows]), dtype=torch.float32)
    mask = torch.as_tensor(np.stack([window.mask for window in windows]))
    outputs = model.speech_frames(values, mask).double().numpy()

    total = np.zeros((len(stream), outputs.shape[-1]))
    counts = np.zeros(len(stream))
    for window, output in zip(windows, outputs):
        valid = window.valid_length
        total[window.start:window.start + valid] += output[:valid]
        counts[window.start:window.start + valid] += 1
    return total / counts[:, None]


def conditioning_features(clip: AlignedClip, model: Optional[CsmpModel], hop: int) -> EmbeddingSequence:
    """
    T x 1024 conditioning: main-agent features in the first half, interlocutor in the second.

    Both agents go through the same model.

    Raises:
        CsmpError: If no trained model is supplied
    """
    if model is None:
        raise CsmpError(f"{clip.clip_id}: conditioning requires a trained contrastive checkpoint")
    model.eval()
    main = speech_frame_features(clip.main_speech, model, hop)
    interlocutor = speech_frame_features(clip.interlocutor_speech, model, hop)
    return EmbeddingSequence(
        rate=clip.rate,
        vectors=np.concatenate([main, interlocutor], axis=1),
        modality=Modality.CONDITIONING,
    )

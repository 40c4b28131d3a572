"""
Deterministic built-in featurizers standing in for pretrained speech/text encoders.

Outputs are pure functions of the input and a fixed seed. Changing the seed
changes every output, so features are not comparable across seed values.
"""
from typing import Sequence
import hashlib

import numpy as np
from scipy import signal

from gestdiff.domain.embedding_models import EmbeddingError, EmbeddingSequence, Modality
from gestdiff.domain.signal_models import AudioTrack


FALLBACK_SAMPLE_RATE = 16000
WINDOW_SECONDS = 0.025
HOP_SECONDS = 0.020  # 50 Hz frames
N_FFT = 512
LOG_FLOOR = 1e-10


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """Triangular mel filters, shape n_mels x (n_fft // 2 + 1)."""
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), n_mels + 2))
    filters = np.zeros((n_mels, bin_freqs.size))
    for index in range(n_mels):
        low, center, high = edges[index], edges[index + 1], edges[index + 2]
        rising = (bin_freqs - low) / (center - low)
        falling = (high - bin_freqs) / (high - center)
        filters[index] = np.clip(np.minimum(rising, falling), 0.0, None)
    return filters


def _projection(seed: int, rows: int, dim: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, dim)) / np.sqrt(rows)


def fallback_audio_features(audio: AudioTrack, dim: int = 768, seed: int = 1234, n_mels: int = 80) -> EmbeddingSequence:
    """
    Log-mel frames (25 ms window, 20 ms hop) projected to `dim` by a seeded matrix.

    Args:
        audio: 16 kHz mono track
        dim: Output width
        seed: Projection seed
        n_mels: Mel bands before projection

    Returns:
        EmbeddingSequence at 50 Hz with ceil(samples / hop) frames

    Raises:
        EmbeddingError: If the track is empty or not 16 kHz
    """
    if audio.sample_rate != FALLBACK_SAMPLE_RATE:
        raise EmbeddingError(f"Fallback featurizer expects 16 kHz audio (got: {audio.sample_rate} Hz)")
    samples = audio.samples
    if samples.size == 0:
        raise EmbeddingError("Cannot featurize empty audio")

    window_length = int(round(WINDOW_SECONDS * FALLBACK_SAMPLE_RATE))
    hop = int(round(HOP_SECONDS * FALLBACK_SAMPLE_RATE))
    frame_count = int(np.ceil(samples.size / hop))
    padded = np.concatenate([samples, np.zeros(frame_count * hop + window_length - samples.size)])
    frames = np.lib.stride_tricks.sliding_window_view(padded, window_length)[::hop][:frame_count]

    spectrum = np.abs(np.fft.rfft(frames * signal.get_window("hann", window_length), n=N_FFT, axis=1)) ** 2
    log_mel = np.log(spectrum @ mel_filterbank(FALLBACK_SAMPLE_RATE, N_FFT, n_mels).T + LOG_FLOOR)
    vectors = log_mel @ _projection(seed, n_mels, dim)
    return EmbeddingSequence(rate=1.0 / HOP_SECONDS, vectors=vectors, modality=Modality.AUDIO)


def fallback_text_features(tokens: Sequence[str], dim: int = 768, seed: int = 1234) -> np.ndarray:
    """
    One deterministic vector per token, seeded by SHA-256 of (seed, token text).

    Returns:
        len(tokens) x dim matrix
    """
    vectors = np.zeros((len(tokens), dim))
    for index, token in enumerate(tokens):
        digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vectors[index] = rng.standard_normal(dim) / np.sqrt(dim)
    return vectors

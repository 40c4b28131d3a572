"""
Speech audio repair: DC-offset removal and transcript-driven cross-talk muting.
"""
from pathlib import Path
import logging

import numpy as np
from scipy.io import wavfile

from gestdiff.domain.signal_models import AudioTrack, SignalError, SpeechIntervals


logger = logging.getLogger(__name__)

RAMP_SHAPES = ("linear", "raised_cosine")


def remove_dc(audio: AudioTrack, zero_eps: float = 0.0) -> AudioTrack:
    """
    Subtract the mean of the non-zeroed portions from those portions.

    Samples with |x| <= zero_eps count as zeroed out (anonymized) and stay
    untouched; when no sample exceeds zero_eps the track is returned as is.

    Args:
        audio: Input track
        zero_eps: Amplitude at or below which a sample counts as zeroed out

    Returns:
        Track whose non-zeroed portion has zero mean
    """
    samples = audio.samples
    active = np.abs(samples) > zero_eps
    if not np.any(active):
        return audio
    offset = samples[active].mean()
    repaired = samples.copy()
    repaired[active] -= offset
    logger.debug("Removed DC offset %.6g from %d samples", offset, int(active.sum()))
    return audio.with_samples(repaired)


def gain_envelope(
    sample_count: int,
    sample_rate: int,
    speech: SpeechIntervals,
    ramp: float = 0.2,
    shape: str = "linear",
) -> np.ndarray:
    """
    Per-sample gain: 1 inside speech, ramping to 0 over `ramp` seconds outside.

    Overlapping ramps take the pointwise maximum gain.

    Raises:
        SignalError: If ramp is negative or the shape is unknown
    """
    if ramp < 0:
        raise SignalError(f"Ramp length must be non-negative (got: {ramp})")
    if shape not in RAMP_SHAPES:
        raise SignalError(f"Unknown ramp shape '{shape}' (expected one of {RAMP_SHAPES})")

    times = np.arange(sample_count) / sample_rate
    gain = np.zeros(sample_count)
    for start, end in speech.intervals:
        if ramp > 0:
            rising = (times - (start - ramp)) / ramp
            falling = ((end + ramp) - times) / ramp
            interval_gain = np.clip(np.minimum(rising, falling), 0.0, 1.0)
        else:
            interval_gain = ((times >= start) & (times <= end)).astype(np.float64)
        gain = np.maximum(gain, interval_gain)

    if shape == "raised_cosine":
        gain = 0.5 - 0.5 * np.cos(np.pi * gain)
    return gain


def mute_crosstalk(
    audio: AudioTrack,
    speech: SpeechIntervals,
    ramp: float = 0.2,
    shape: str = "linear",
) -> AudioTrack:
    """
    Mute everything outside the speaker's transcribed speech intervals.

    Args:
        audio: Input track of one speaker's channel
        speech: Intervals marked as speech for that speaker (clipped to the track)
        ramp: Ramp length in seconds on each side of every interval
        shape: 'linear' (default) or 'raised_cosine'

    Returns:
        Gated track

    Raises:
        SignalError: If ramp is negative
    """
    gain = gain_envelope(len(audio.samples), audio.sample_rate, speech, ramp, shape)
    return audio.with_samples(audio.samples * gain)


def read_wav(path: Path) -> AudioTrack:
    """
    Read a mono WAV file (PCM16 or float32) as samples in [-1, 1].

    Raises:
        SignalError: If the file is not mono or uses an unsupported sample format
    """
    sample_rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise SignalError(f"{path}: expected mono audio (got {data.shape[1]} channels)")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise SignalError(f"{path}: unsupported sample format {data.dtype}")
    return AudioTrack(sample_rate=int(sample_rate), samples=samples)


def write_wav(path: Path, audio: AudioTrack, pcm16: bool = False) -> None:
    """Write a track as float32 (default) or PCM16 mono WAV."""
    if pcm16:
        data = np.clip(np.round(audio.samples * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = audio.samples.astype(np.float32)
    wavfile.write(str(path), audio.sample_rate, data)

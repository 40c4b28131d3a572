"""
Domain models for speech audio.
"""
from typing import List, Dict, Any, Tuple
from dataclasses import dataclass, field

import numpy as np

from gestdiff.core.errors import DataError


class SignalError(DataError):
    """Raised when audio or interval data violates an invariant."""
    pass


@dataclass(frozen=True)
class AudioTrack:
    """Mono audio; samples are finite reals, nominally in [-1, 1]."""
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise SignalError(f"Sample rate must be positive (got: {self.sample_rate})")
        if samples.ndim != 1:
            raise SignalError(f"Audio must be one channel (got shape {samples.shape})")
        if not np.all(np.isfinite(samples)):
            raise SignalError("Audio contains non-finite samples")

    def with_samples(self, samples: np.ndarray) -> "AudioTrack":
        return AudioTrack(sample_rate=self.sample_rate, samples=samples)


@dataclass(frozen=True)
class SpeechIntervals:
    """
    Spans marked as speech for one speaker.

    Construction normalizes: intervals are sorted and overlapping or touching
    spans are merged.
    """
    intervals: Tuple[Tuple[float, float], ...] = field(default_factory=tuple)

    def __post_init__(self):
        spans = sorted((float(start), float(end)) for start, end in self.intervals)
        for start, end in spans:
            if not start < end:
                raise SignalError(f"Speech interval must satisfy start < end (got: [{start}, {end}])")
        merged: List[List[float]] = []
        for start, end in spans:
            if merged and start <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], end)
            else:
                merged.append([start, end])
        object.__setattr__(self, "intervals", tuple((start, end) for start, end in merged))

    def __len__(self) -> int:
        return len(self.intervals)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {"intervals": [{"start": start, "end": end} for start, end in self.intervals]}

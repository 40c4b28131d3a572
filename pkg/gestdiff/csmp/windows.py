"""
Sliding-window chunking of long streams into fixed-context windows.
"""
from dataclasses import dataclass
from typing import List

import numpy as np


@dataclass(frozen=True)
class Window:
    """One context-length slice of a stream; mask is False on zero padding."""
    start: int
    values: np.ndarray  # context x d
    mask: np.ndarray  # context, bool

    @property
    def valid_length(self) -> int:
        return int(self.mask.sum())


def window_starts(length: int, context: int, hop: int) -> List[int]:
    """
    Start frames of the windows covering a stream of `length` frames.

    Windows start at 0, hop, 2*hop, ... while start + context <= length; if the
    last of those does not end at `length`, an end-anchored window starting at
    length - context is appended. Streams shorter than the context get a
    single window at 0.
    """
    if length <= context:
        return [0]
    starts = list(range(0, length - context + 1, hop))
    if starts[-1] + context != length:
        starts.append(length - context)
    return starts


def extract_window(stream: np.ndarray, start: int, context: int) -> Window:
    """Slice [start, start + context), zero-padding past the end of the stream."""
    stream = np.asarray(stream)
    values = np.zeros((context,) + stream.shape[1:], dtype=stream.dtype)
    piece = stream[start:start + context]
    values[:len(piece)] = piece
    mask = np.zeros(context, dtype=bool)
    mask[:len(piece)] = True
    return Window(start=start, values=values, mask=mask)


def chunk_windows(stream: np.ndarray, context: int = 500, hop: int = 250) -> List[Window]:
    """Cut a T x d stream (T >= 1) into windows; see window_starts for placement."""
    return [extract_window(stream, start, context) for start in window_starts(len(stream), context, hop)]

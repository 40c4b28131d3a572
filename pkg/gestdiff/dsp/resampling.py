"""
Rational-rate polyphase resampling of audio and embedding streams.
"""
from fractions import Fraction
from typing import Tuple

import numpy as np
from scipy import signal

from gestdiff.core.errors import DataError


KAISER_BETA = 5.0
TAPS_PER_PHASE_FACTOR = 10  # half filter length = 10 * max(up, down)


class ResampleError(DataError):
    """Raised when a stream cannot be resampled."""
    pass


def rate_ratio(rate_in: float, rate_out: float) -> Tuple[int, int]:
    """
    (up, down) in lowest terms with rate_out / rate_in = up / down.

    Raises:
        ResampleError: If a rate is not positive or the ratio is not rational at millihertz precision
    """
    if rate_in <= 0 or rate_out <= 0:
        raise ResampleError(f"Rates must be positive (got: {rate_in} -> {rate_out})")
    ratio = Fraction(round(rate_out * 1000), round(rate_in * 1000))
    if abs(float(ratio) - rate_out / rate_in) > 1e-9:
        raise ResampleError(f"Rate ratio {rate_out}/{rate_in} is not representable at millihertz precision")
    return ratio.numerator, ratio.denominator


def design_polyphase_filter(up: int, down: int) -> np.ndarray:
    """
    Kaiser-windowed sinc low-pass at min(pi/up, pi/down).

    Each of the `up` polyphase branches is normalized to sum 1/up, so once the
    resampler scales by `up` every output phase has DC gain exactly 1.
    """
    max_rate = max(up, down)
    half_len = TAPS_PER_PHASE_FACTOR * max_rate
    taps = signal.firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    for phase in range(up):
        taps[phase::up] /= taps[phase::up].sum() * up
    return taps


def resample_polyphase(x: np.ndarray, rate_in: float, rate_out: float) -> np.ndarray:
    """
    Resample a stream along axis 0 from rate_in to rate_out.

    Upsample by `up` (zero insertion), low-pass filter, downsample by `down`,
    with group delay compensated so output and input are time-aligned. Signal
    ends are extended by edge replication. Columns are resampled independently.

    Args:
        x: Samples, shape (T,) or (T, channels)
        rate_in: Input rate in Hz
        rate_out: Output rate in Hz

    Returns:
        Array with ceil(T * up / down) rows

    Raises:
        ResampleError: If the input is empty or the rates are invalid
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ResampleError("Cannot resample an empty stream")
    up, down = rate_ratio(rate_in, rate_out)
    if up == down:
        return x.copy()
    taps = design_polyphase_filter(up, down)
    return signal.resample_poly(x, up, down, axis=0, window=taps, padtype="edge")

"""
Hampel-filter detection of joint-speed discontinuities.

Flags frames where a joint's speed deviates from its rolling median by more than
`threshold` scaled MADs. Detection only: flagged files are reported for manual
review, never repaired.
"""
from typing import List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gestdiff.core.errors import DataError
from gestdiff.domain.motion_models import AnomalyFlag, AnomalyReport


# k = 1 / Phi^-1(3/4): makes the MAD a consistent estimator of a normal sigma
GAUSSIAN_SCALE_FACTOR = 1.4826


class AnomalyDetectionError(DataError):
    """Raised when Hampel parameters do not fit the series."""
    pass


def joint_speeds(positions: np.ndarray, frame_rate: float) -> np.ndarray:
    """Speeds (T-1) x J; row t-1 holds ||pos_t - pos_{t-1}|| * frame_rate."""
    return np.linalg.norm(np.diff(positions, axis=0), axis=-1) * frame_rate


def rolling_median_mad(series: np.ndarray, window: int):
    """
    Centered rolling median and MAD; windows are truncated at the series ends.

    Returns:
        (median, mad) arrays with the length of `series`
    """
    half = window // 2
    padded = np.concatenate([np.full(half, np.nan), series, np.full(half, np.nan)])
    windows = sliding_window_view(padded, window)
    median = np.nanmedian(windows, axis=1)
    mad = np.nanmedian(np.abs(windows - median[:, None]), axis=1)
    return median, mad


def detect_speed_anomalies(
    positions: np.ndarray,
    frame_rate: float,
    joint_names: Sequence[str],
    joints: Sequence[int],
    window: int = 15,
    threshold: float = 3.0,
    mad_floor: float = 1e-9,
) -> AnomalyReport:
    """
    Flag speed discontinuities of selected joints with a Hampel filter.

    Frame t is flagged for joint j iff
    |speed_t - median_t| > threshold * 1.4826 * max(MAD_t, mad_floor).

    Args:
        positions: T x J x 3 world positions
        frame_rate: Frames per second
        joint_names: Names of all J joints
        joints: Indices of the joints to inspect
        window: Odd rolling-window length in frames
        threshold: Deviation threshold in scaled MADs
        mad_floor: Lower bound on the MAD (speed units)

    Returns:
        AnomalyReport sorted by frame index

    Raises:
        AnomalyDetectionError: If the window is even or not shorter than the clip
    """
    frame_count = positions.shape[0]
    if window % 2 == 0:
        raise AnomalyDetectionError(f"Hampel window must be odd (got: {window})")
    if window >= frame_count:
        raise AnomalyDetectionError(f"Hampel window ({window}) must be shorter than the clip ({frame_count} frames)")

    speeds = joint_speeds(positions, frame_rate)
    flags: List[AnomalyFlag] = []
    for joint in joints:
        series = speeds[:, joint]
        median, mad = rolling_median_mad(series, window)
        scale = GAUSSIAN_SCALE_FACTOR * np.maximum(mad, mad_floor)
        deviation = np.abs(series - median)
        for row in np.flatnonzero(deviation > threshold * scale):
            flags.append(AnomalyFlag(
                frame=int(row) + 1,
                joint=joint_names[joint],
                speed=float(series[row]),
                median=float(median[row]),
                score=float(deviation[row] / scale[row]),
            ))
    return AnomalyReport(frame_count=frame_count, flags=tuple(flags))


def format_anomaly_report(file_name: str, report: AnomalyReport) -> str:
    """Line-oriented report: file, frame, joint, speed, median, score (tab separated)."""
    return "".join(
        f"{file_name}\t{flag.frame}\t{flag.joint}\t{flag.speed:.6g}\t{flag.median:.6g}\t{flag.score:.6g}\n"
        for flag in report.flags
    )

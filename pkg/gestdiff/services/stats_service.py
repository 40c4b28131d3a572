"""
Objective motion statistics.
Per-file mean joint speed, jerk, wrist-speed histogram and Hampel flagged
fraction, written as machine-readable JSON.
"""
from pathlib import Path
from typing import List, Optional
import logging

import numpy as np

from gestdiff.core.errors import DataError
from gestdiff.core.pipeline_config import PipelineConfig
from gestdiff.domain.report_models import ClipMotionStats, MotionStatsReport
from gestdiff.motion.anomalies import detect_speed_anomalies, joint_speeds
from gestdiff.motion.bvh import read_bvh
from gestdiff.motion.kinematics import forward_kinematics
from gestdiff.motion.rotations import clip_to_pose
from gestdiff.utils.fs import expand_inputs, write_json


logger = logging.getLogger(__name__)


class StatsError(DataError):
    """Raised when a motion file cannot be analysed."""
    pass


def mean_joint_speed(positions: np.ndarray, frame_rate: float) -> float:
    """Mean of per-joint speeds over all joints and frame pairs; 0 for single-frame clips."""
    if len(positions) < 2:
        return 0.0
    return float(joint_speeds(positions, frame_rate).mean())


def mean_jerk(positions: np.ndarray, frame_rate: float) -> float:
    """Mean magnitude of the third finite difference times frame_rate^3; 0 below four frames."""
    if len(positions) < 4:
        return 0.0
    jerk = np.diff(positions, n=3, axis=0) * frame_rate ** 3
    return float(np.linalg.norm(jerk, axis=-1).mean())


def frame_speeds(positions: np.ndarray, frame_rate: float, joints: List[int]) -> np.ndarray:
    """
    Mean speed of the selected joints at every frame (length T).

    Frame 0 has no predecessor and takes the speed of frame 1.
    """
    if len(positions) < 2:
        return np.zeros(len(positions))
    speeds = joint_speeds(positions[:, joints], frame_rate).mean(axis=1)
    return np.concatenate([speeds[:1], speeds])


def speed_histogram(speeds: np.ndarray, edges: np.ndarray) -> List[int]:
    """Counts per bin; speeds beyond the last edge fall into the last bin so counts sum to len(speeds)."""
    bins = len(edges) - 1
    index = np.clip(np.searchsorted(edges, speeds, side="right") - 1, 0, bins - 1)
    return np.bincount(index, minlength=bins).astype(int).tolist()


class StatsService:
    """Service computing objective statistics for BVH files."""

    def __init__(self, settings: PipelineConfig):
        self.settings = settings
        stats = settings.stats
        self.edges = np.linspace(0.0, stats.histogram_max_speed, stats.histogram_bins + 1)

    def clip_stats(self, path: Path) -> ClipMotionStats:
        """
        Statistics of one BVH file.

        Raises:
            StatsError: If the file cannot be read or parsed
        """
        try:
            clip = read_bvh(path)
            pose = clip_to_pose(clip, include_root_translation=True)
        except (DataError, OSError) as error:
            raise StatsError(f"{path}: {error}") from error

        positions = forward_kinematics(pose)
        frame_rate = pose.frame_rate
        skeleton = pose.skeleton
        wrists = skeleton.select(self.settings.stats.wrist_patterns)
        if not wrists:
            logger.warning("%s: no joint matches %s; histogram uses all joints", path, self.settings.stats.wrist_patterns)
            wrists = list(range(skeleton.joint_count))

        motion = self.settings.motion
        flagged_fraction = 0.0
        hampel_joints = skeleton.select(motion.hampel_joint_patterns)
        if motion.hampel_window < pose.frame_count and hampel_joints:
            report = detect_speed_anomalies(
                positions, frame_rate, skeleton.names, hampel_joints,
                window=motion.hampel_window, threshold=motion.hampel_threshold, mad_floor=motion.mad_floor,
            )
            flagged_fraction = report.flagged_fraction

        stats = ClipMotionStats(
            name=Path(path).name,
            frame_count=pose.frame_count,
            mean_joint_speed=mean_joint_speed(positions, frame_rate),
            mean_jerk=mean_jerk(positions, frame_rate),
            wrist_speed_histogram=speed_histogram(frame_speeds(positions, frame_rate, wrists), self.edges),
            flagged_fraction=flagged_fraction,
        )
        values = (stats.mean_joint_speed, stats.mean_jerk, stats.flagged_fraction)
        if not all(np.isfinite(value) for value in values):
            raise StatsError(f"{path}: non-finite statistics")
        return stats

    def run(self, inputs: List[Path], output_path: Optional[Path] = None) -> MotionStatsReport:
        """
        Analyse BVH files (directories are searched recursively) and optionally write JSON.

        Raises:
            StatsError: If no file is given or one cannot be analysed
        """
        paths = expand_inputs(inputs, ".bvh")
        if not paths:
            raise StatsError("No BVH files to analyse")
        report = MotionStatsReport(
            rows=[self.clip_stats(path) for path in paths],
            histogram_edges=self.edges.tolist(),
        )
        if output_path is not None:
            write_json(output_path, report.to_dict())
            logger.info("Wrote statistics for %d files to %s", len(report.rows), output_path)
        return report

"""
Domain models for preparation summaries and objective motion statistics.
"""
from typing import List, Dict, Any, Optional
from dataclasses import dataclass, field


@dataclass
class ClipMotionStats:
    """Objective statistics of one motion file."""
    name: str
    frame_count: int
    mean_joint_speed: float  # length units / s, averaged over joints and frames
    mean_jerk: float  # length units / s^3
    wrist_speed_histogram: List[int]
    flagged_fraction: float

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            "name": self.name,
            "frames": self.frame_count,
            "mean_joint_speed": self.mean_joint_speed,
            "mean_jerk": self.mean_jerk,
            "wrist_speed_histogram": list(self.wrist_speed_histogram),
            "flagged_fraction": self.flagged_fraction,
        }


@dataclass
class MotionStatsReport:
    """One row per motion file plus the shared histogram bin edges."""
    rows: List[ClipMotionStats] = field(default_factory=list)
    histogram_edges: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            "histogram_edges": list(self.histogram_edges),
            "clips": [row.to_dict() for row in self.rows],
        }


@dataclass
class ClipPrepResult:
    """Outcome of preparing one clip."""
    clip_id: str
    archive: Optional[str] = None
    frame_count: int = 0
    flagged_fraction: float = 0.0
    flag_count: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            "clip_id": self.clip_id,
            "archive": self.archive,
            "frames": self.frame_count,
            "flagged_fraction": self.flagged_fraction,
            "flags": self.flag_count,
            "error": self.error,
        }


@dataclass
class PrepSummary:
    """Per-clip results of a preparation run and the advisory exclusion list."""
    results: List[ClipPrepResult] = field(default_factory=list)
    excluded: List[str] = field(default_factory=list)

    @property
    def prepared(self) -> int:
        return sum(1 for result in self.results if result.ok)

    @property
    def failures(self) -> List[ClipPrepResult]:
        return [result for result in self.results if not result.ok]

    def summary_line(self) -> str:
        return f"prepared {self.prepared}/{len(self.results)}"

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            "summary": self.summary_line(),
            "clips": [result.to_dict() for result in self.results],
            "exclusion_candidates": list(self.excluded),
        }

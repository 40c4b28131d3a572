"""
Domain models for skeletal motion.
Defines skeletons, exponential-map pose sequences and speed-anomaly reports.
"""
from typing import List, Dict, Any, Optional, Tuple
from dataclasses import dataclass, field

import numpy as np

from gestdiff.core.errors import DataError


ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")


class MotionError(DataError):
    """Raised when motion data violates a skeleton or pose invariant."""
    pass


def _frozen_array(values: Any, dtype=np.float64) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Joint:
    """A skeleton joint in topological order."""
    name: str
    parent: int  # -1 for the root
    offset: Tuple[float, float, float]
    channels: Tuple[str, ...]
    end_site: Optional[Tuple[float, float, float]] = None

    @property
    def rotation_order(self) -> str:
        """Intrinsic Euler order as upper-case axes, e.g. 'ZXY'."""
        return "".join(channel[0] for channel in self.channels if channel in ROTATION_CHANNELS)

    @property
    def rotation_channel_indices(self) -> List[int]:
        """Positions of the rotation channels within this joint's channel list."""
        return [index for index, channel in enumerate(self.channels) if channel in ROTATION_CHANNELS]

    @property
    def position_channel_indices(self) -> List[int]:
        """Positions of the X/Y/Z position channels (in X, Y, Z order) within this joint's channel list."""
        return [self.channels.index(channel) for channel in POSITION_CHANNELS if channel in self.channels]


@dataclass(frozen=True)
class Skeleton:
    """Ordered joint hierarchy with exactly one root."""
    joints: Tuple[Joint, ...]

    def __post_init__(self):
        if not self.joints:
            raise MotionError("Skeleton has no joints")
        roots = [index for index, joint in enumerate(self.joints) if joint.parent < 0]
        if roots != [0]:
            raise MotionError(f"Skeleton must have exactly one root at index 0 (roots: {roots})")
        for index, joint in enumerate(self.joints[1:], start=1):
            if not 0 <= joint.parent < index:
                raise MotionError(
                    f"Joint '{joint.name}' has parent {joint.parent}; parents must precede children"
                )
        for joint in self.joints:
            order = joint.rotation_order
            if len(order) != 3 or len(set(order)) != 3:
                raise MotionError(
                    f"Joint '{joint.name}' must have three distinct rotation channels (got: {joint.channels})"
                )
            if joint.parent >= 0 and joint.position_channel_indices:
                raise MotionError(f"Joint '{joint.name}': position channels are only supported on the root")

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def names(self) -> List[str]:
        return [joint.name for joint in self.joints]

    @property
    def parents(self) -> np.ndarray:
        return np.array([joint.parent for joint in self.joints], dtype=np.int64)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([joint.offset for joint in self.joints], dtype=np.float64)

    @property
    def channel_count(self) -> int:
        return sum(len(joint.channels) for joint in self.joints)

    def channel_starts(self) -> List[int]:
        """Column of each joint's first channel in a BVH frame row."""
        starts, cursor = [], 0
        for joint in self.joints:
            starts.append(cursor)
            cursor += len(joint.channels)
        return starts

    def select(self, patterns: List[str]) -> List[int]:
        """Indices of joints whose name contains any pattern (case-insensitive)."""
        lowered = [pattern.lower() for pattern in patterns]
        return [
            index for index, joint in enumerate(self.joints)
            if any(pattern in joint.name.lower() for pattern in lowered)
        ]


@dataclass(frozen=True)
class MotionClip:
    """Raw BVH motion: channel values in the hierarchy's native layout."""
    skeleton: Skeleton
    channels: np.ndarray  # T x channel_count, rotations in degrees
    frame_rate: float

    def __post_init__(self):
        object.__setattr__(self, "channels", _frozen_array(self.channels))
        if self.channels.ndim != 2 or self.channels.shape[1] != self.skeleton.channel_count:
            raise MotionError(
                f"Channel matrix shape {self.channels.shape} does not match "
                f"{self.skeleton.channel_count} skeleton channels"
            )
        if self.frame_rate <= 0:
            raise MotionError(f"Frame rate must be positive (got: {self.frame_rate})")

    @property
    def frame_count(self) -> int:
        return self.channels.shape[0]

    def euler_degrees(self) -> np.ndarray:
        """Rotation channel values per joint, T x J x 3, in each joint's channel order."""
        starts = self.skeleton.channel_starts()
        columns = [
            [start + offset for offset in joint.rotation_channel_indices]
            for start, joint in zip(starts, self.skeleton.joints)
        ]
        return self.channels[:, np.array(columns)]

    def root_translation(self) -> np.ndarray:
        """Root X/Y/Z position channels, T x 3 (zeros when the root has none)."""
        root = self.skeleton.joints[0]
        indices = root.position_channel_indices
        if len(indices) != 3:
            return np.zeros((self.frame_count, 3))
        return self.channels[:, indices]


@dataclass(frozen=True)
class PoseSequence:
    """
    Exponential-map poses relative to a T-pose.

    Frame layout: [root translation (3) if enabled] + 3 expmap coordinates per joint.
    """
    skeleton: Skeleton
    frames: np.ndarray  # T x D
    frame_rate: float
    includes_root_translation: bool = False
    tpose: Optional[np.ndarray] = None  # J x 3 x 3 reference rotations; identity when None

    def __post_init__(self):
        object.__setattr__(self, "frames", _frozen_array(self.frames))
        if self.tpose is not None:
            object.__setattr__(self, "tpose", _frozen_array(self.tpose))
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise MotionError(f"Pose frames must be a non-empty T x D matrix (got shape {self.frames.shape})")
        if self.frames.shape[1] != self.expected_dim(self.skeleton, self.includes_root_translation):
            raise MotionError(
                f"Pose width {self.frames.shape[1]} does not match skeleton "
                f"({self.skeleton.joint_count} joints, root translation={self.includes_root_translation})"
            )
        if self.frame_rate <= 0:
            raise MotionError(f"Frame rate must be positive (got: {self.frame_rate})")
        if not np.all(np.isfinite(self.frames)):
            raise MotionError("Pose frames contain non-finite values")
        angles = np.linalg.norm(self.expmaps(), axis=-1)
        if np.any(angles > np.pi + 1e-9):
            raise MotionError("Expmap angles must be canonicalized to [0, pi]")

    @staticmethod
    def expected_dim(skeleton: Skeleton, includes_root_translation: bool) -> int:
        return 3 * skeleton.joint_count + (3 if includes_root_translation else 0)

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    def expmaps(self) -> np.ndarray:
        """Expmap coordinates as T x J x 3."""
        start = 3 if self.includes_root_translation else 0
        return self.frames[:, start:].reshape(self.frame_count, -1, 3)

    def translation(self) -> np.ndarray:
        """Root translation, T x 3 (zeros when not included)."""
        if not self.includes_root_translation:
            return np.zeros((self.frame_count, 3))
        return self.frames[:, :3]

    def tpose_matrices(self) -> np.ndarray:
        if self.tpose is None:
            return np.tile(np.eye(3), (self.skeleton.joint_count, 1, 1))
        return self.tpose

    def truncated(self, length: int) -> "PoseSequence":
        return PoseSequence(
            skeleton=self.skeleton,
            frames=self.frames[:length],
            frame_rate=self.frame_rate,
            includes_root_translation=self.includes_root_translation,
            tpose=self.tpose,
        )


@dataclass(frozen=True)
class AnomalyFlag:
    """One frame flagged by the Hampel speed detector."""
    frame: int
    joint: str
    speed: float
    median: float
    score: float  # |speed - median| / (1.4826 * MAD)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            "frame": self.frame,
            "joint": self.joint,
            "speed": self.speed,
            "median": self.median,
            "score": self.score,
        }


@dataclass(frozen=True)
class AnomalyReport:
    """Speed anomalies of one motion file, sorted by frame index."""
    frame_count: int
    flags: Tuple[AnomalyFlag, ...] = field(default_factory=tuple)

    def __post_init__(self):
        ordered = tuple(sorted(self.flags, key=lambda flag: (flag.frame, flag.joint)))
        object.__setattr__(self, "flags", ordered)
        if any(not 0 <= flag.frame < self.frame_count for flag in ordered):
            raise MotionError("Anomaly flags must lie within [0, frame_count)")

    @property
    def flagged_frames(self) -> List[int]:
        return sorted({flag.frame for flag in self.flags})

    @property
    def flagged_fraction(self) -> float:
        return len(self.flagged_frames) / self.frame_count

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            "frame_count": self.frame_count,
            "flagged_fraction": self.flagged_fraction,
            "flags": [flag.to_dict() for flag in self.flags],
        }

"""
Forward kinematics for expmap pose sequences.
"""
import numpy as np

from gestdiff.domain.motion_models import PoseSequence
from gestdiff.motion.rotations import from_expmap


def forward_kinematics(pose: PoseSequence) -> np.ndarray:
    """
    World positions of every joint.

    The root sits at the root translation (origin when the pose has none); its
    OFFSET is ignored. Each child sits at parent position + parent world rotation * offset.

    Args:
        pose: Expmap pose sequence with attached skeleton

    Returns:
        T x J x 3 joint positions in skeleton length units
    """
    skeleton = pose.skeleton
    local = from_expmap(pose)
    offsets = skeleton.offsets
    frame_count, joint_count = local.shape[:2]

    world_rotations = np.empty_like(local)
    positions = np.empty((frame_count, joint_count, 3))
    world_rotations[:, 0] = local[:, 0]
    positions[:, 0] = pose.translation()
    for index in range(1, joint_count):
        parent = skeleton.joints[index].parent
        world_rotations[:, index] = world_rotations[:, parent] @ local[:, index]
        positions[:, index] = positions[:, parent] + world_rotations[:, parent] @ offsets[index]
    return positions

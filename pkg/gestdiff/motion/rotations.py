"""
Euler <-> exponential-map conversion relative to a T-pose.

All rotation algebra goes through scipy's Rotation; Euler channels are
intrinsic rotations composed in each joint's BVH channel order.
"""
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from gestdiff.domain.motion_models import MotionClip, PoseSequence, Skeleton


# Angles within this distance of pi get the fixed axis-sign convention
ANTIPODAL_TOLERANCE = 1e-9


def canonicalize_expmap(vectors: np.ndarray) -> np.ndarray:
    """
    Map arbitrary axis-angle 3-vectors onto the canonical expmap chart.

    The angle is wrapped to [0, pi]; at exactly pi the axis sign is chosen so
    that its first non-zero component is positive.

    Args:
        vectors: (..., 3) array of axis-angle vectors

    Returns:
        Array of the same shape representing the same rotations
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    shape = vectors.shape
    flat = Rotation.from_rotvec(np.array(vectors.reshape(-1, 3))).as_rotvec()
    angles = np.linalg.norm(flat, axis=1)
    at_pi = np.abs(angles - np.pi) < ANTIPODAL_TOLERANCE
    for row in np.flatnonzero(at_pi):
        nonzero = np.flatnonzero(np.abs(flat[row]) > 1e-12)
        if nonzero.size and flat[row, nonzero[0]] < 0:
            flat[row] = -flat[row]
    return flat.reshape(shape)


def _tpose_rotations(skeleton: Skeleton, tpose: Optional[np.ndarray]) -> Rotation:
    if tpose is None:
        return Rotation.identity(skeleton.joint_count)
    return Rotation.from_matrix(np.asarray(tpose, dtype=np.float64))


def to_expmap(
    euler_degrees: np.ndarray,
    skeleton: Skeleton,
    frame_rate: float,
    tpose: Optional[np.ndarray] = None,
    root_translation: Optional[np.ndarray] = None,
) -> PoseSequence:
    """
    Convert per-joint Euler rotations to expmap poses relative to a T-pose.

    Args:
        euler_degrees: T x J x 3 angles in each joint's channel order
        skeleton: Skeleton defining channel orders
        frame_rate: Frames per second
        tpose: Optional J x 3 x 3 reference rotations (identity when None)
        root_translation: Optional T x 3 root positions; included in the pose when given

    Returns:
        PoseSequence whose expmap vectors are log(tpose^-1 * frame rotation)
    """
    euler_degrees = np.asarray(euler_degrees, dtype=np.float64)
    frame_count = euler_degrees.shape[0]
    reference = _tpose_rotations(skeleton, tpose)
    expmaps = np.empty((frame_count, skeleton.joint_count, 3))
    for index, joint in enumerate(skeleton.joints):
        local = Rotation.from_euler(joint.rotation_order, euler_degrees[:, index], degrees=True)
        relative = reference[index].inv() * local
        expmaps[:, index] = relative.as_rotvec()
    expmaps = canonicalize_expmap(expmaps)

    frames = expmaps.reshape(frame_count, -1)
    if root_translation is not None:
        frames = np.concatenate([np.asarray(root_translation, dtype=np.float64), frames], axis=1)
    return PoseSequence(
        skeleton=skeleton,
        frames=frames,
        frame_rate=frame_rate,
        includes_root_translation=root_translation is not None,
        tpose=None if tpose is None else np.asarray(tpose, dtype=np.float64),
    )


def clip_to_pose(clip: MotionClip, tpose: Optional[np.ndarray] = None, include_root_translation: bool = False) -> PoseSequence:
    """Expmap pose sequence of a parsed BVH clip."""
    translation = clip.root_translation() if include_root_translation else None
    return to_expmap(clip.euler_degrees(), clip.skeleton, clip.frame_rate, tpose, translation)


def tpose_from_clip(clip: MotionClip, frame: int = 0) -> np.ndarray:
    """Reference rotations (J x 3 x 3) taken from one frame of a clip."""
    euler = clip.euler_degrees()[frame]
    return np.stack([
        Rotation.from_euler(joint.rotation_order, euler[index], degrees=True).as_matrix()
        for index, joint in enumerate(clip.skeleton.joints)
    ])


def from_expmap(pose: PoseSequence) -> np.ndarray:
    """
    Local joint rotation matrices of a pose sequence.

    Args:
        pose: Expmap pose sequence

    Returns:
        T x J x 3 x 3 matrices, tpose * exp(expmap); exact inverse of to_expmap on rotations
    """
    expmaps = pose.expmaps()
    frame_count, joint_count, _ = expmaps.shape
    reference = Rotation.from_matrix(pose.tpose_matrices())
    matrices = np.empty((frame_count, joint_count, 3, 3))
    for index in range(joint_count):
        matrices[:, index] = (reference[index] * Rotation.from_rotvec(np.array(expmaps[:, index]))).as_matrix()
    return matrices


def pose_to_euler(pose: PoseSequence) -> np.ndarray:
    """Euler angles (T x J x 3, degrees) in each joint's channel order."""
    matrices = from_expmap(pose)
    euler = np.empty(matrices.shape[:2] + (3,))
    for index, joint in enumerate(pose.skeleton.joints):
        euler[:, index] = Rotation.from_matrix(matrices[:, index]).as_euler(joint.rotation_order, degrees=True)
    return euler


def pose_to_channels(pose: PoseSequence) -> MotionClip:
    """
    Lay a pose sequence out in its skeleton's BVH channel layout.

    Rotation channels come from the expmaps; root position channels carry the
    root translation when the pose includes it and zeros otherwise.
    """
    skeleton = pose.skeleton
    euler = pose_to_euler(pose)
    translation = pose.translation()
    channels = np.zeros((pose.frame_count, skeleton.channel_count))
    for start, (index, joint) in zip(skeleton.channel_starts(), enumerate(skeleton.joints)):
        for axis, column in enumerate(joint.rotation_channel_indices):
            channels[:, start + column] = euler[:, index, axis]
        if index == 0:
            for axis, column in enumerate(joint.position_channel_indices):
                channels[:, start + column] = translation[:, axis]
    return MotionClip(skeleton=skeleton, channels=channels, frame_rate=pose.frame_rate)

"""
Tests for Euler <-> exponential-map conversion.
"""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from gestdiff.domain.motion_models import MotionError, PoseSequence
from gestdiff.motion.rotations import (
    canonicalize_expmap,
    clip_to_pose,
    from_expmap,
    pose_to_channels,
    pose_to_euler,
    to_expmap,
    tpose_from_clip,
)
from gestdiff.tests.conftest import gesture_motion, make_chain_skeleton


def single_joint():
    return make_chain_skeleton([(0, 0, 0)])


def test_rotation_equal_to_tpose_gives_zero_expmap():
    skeleton = single_joint()
    tpose = Rotation.from_euler("ZXY", [30, 10, -20], degrees=True).as_matrix()[None]

    pose = to_expmap(np.array([[[30.0, 10.0, -20.0]]]), skeleton, 30.0, tpose)

    np.testing.assert_allclose(pose.frames, 0.0, atol=1e-12)


def test_quarter_turn_about_z_is_axis_angle():
    """Zrotation is the first channel of the test skeleton."""
    pose = to_expmap(np.array([[[90.0, 0.0, 0.0]]]), single_joint(), 30.0)

    np.testing.assert_allclose(pose.frames[0], [0.0, 0.0, np.pi / 2], atol=1e-9)


def test_round_trip_recovers_rotation_matrices():
    """to_expmap then from_expmap recovers 1000 random rotations within 1e-6."""
    skeleton = single_joint()
    rotations = Rotation.random(1000, random_state=3)
    euler = rotations.as_euler("ZXY", degrees=True)[:, None, :]
    tpose = Rotation.from_euler("xyz", [5, -40, 12], degrees=True).as_matrix()[None]

    pose = to_expmap(euler, skeleton, 30.0, tpose)
    recovered = from_expmap(pose)[:, 0]

    errors = np.linalg.norm(recovered - rotations.as_matrix(), axis=(1, 2))
    assert errors.max() < 1e-6


def test_zero_pose_gives_tpose_exactly():
    skeleton = single_joint()
    tpose = Rotation.from_euler("xyz", [20, 0, 70], degrees=True).as_matrix()[None]
    pose = PoseSequence(skeleton=skeleton, frames=np.zeros((3, 3)), frame_rate=30.0, tpose=tpose)

    matrices = from_expmap(pose)

    for frame in matrices:
        np.testing.assert_allclose(frame[0], tpose[0], atol=1e-12)


def test_antipodal_expmaps_are_the_same_rotation():
    skeleton = single_joint()
    forward = PoseSequence(skeleton=skeleton, frames=[[np.pi, 0.0, 0.0]], frame_rate=30.0)
    backward = PoseSequence(skeleton=skeleton, frames=[[-np.pi, 0.0, 0.0]], frame_rate=30.0)
    expected = Rotation.from_rotvec([np.pi, 0, 0]).as_matrix()

    np.testing.assert_allclose(from_expmap(forward)[0, 0], expected, atol=1e-12)
    np.testing.assert_allclose(from_expmap(backward)[0, 0], expected, atol=1e-12)


def test_canonicalize_wraps_angles_into_zero_to_pi():
    vectors = np.random.default_rng(0).normal(scale=6.0, size=(200, 3))

    canonical = canonicalize_expmap(vectors)

    assert np.all(np.linalg.norm(canonical, axis=1) <= np.pi + 1e-9)
    np.testing.assert_allclose(
        Rotation.from_rotvec(canonical).as_matrix(), Rotation.from_rotvec(vectors).as_matrix(), atol=1e-9
    )


def test_canonicalize_fixes_axis_sign_at_pi():
    np.testing.assert_allclose(canonicalize_expmap([[-np.pi, 0.0, 0.0]]), [[np.pi, 0.0, 0.0]], atol=1e-12)


def test_pose_rejects_uncanonical_angles():
    with pytest.raises(MotionError, match="canonicalized"):
        PoseSequence(skeleton=single_joint(), frames=[[4.0, 0.0, 0.0]], frame_rate=30.0)


def test_pose_rejects_wrong_width(gesture_skeleton):
    with pytest.raises(MotionError, match="does not match"):
        PoseSequence(skeleton=gesture_skeleton, frames=np.zeros((2, 5)), frame_rate=30.0)


def test_clip_to_pose_and_back_to_channels_preserves_motion():
    """Expmaps laid back out as channels reproduce the rotations of the source clip."""
    clip = gesture_motion(40)

    pose = clip_to_pose(clip, include_root_translation=True)
    channels = pose_to_channels(pose)
    reparsed = clip_to_pose(channels, include_root_translation=True)

    assert pose.frames.shape == (40, 3 + 3 * clip.skeleton.joint_count)
    np.testing.assert_allclose(reparsed.frames, pose.frames, atol=1e-9)


def test_pose_to_euler_matches_source_angles():
    clip = gesture_motion(10)

    euler = pose_to_euler(clip_to_pose(clip))

    np.testing.assert_allclose(euler, clip.euler_degrees(), atol=1e-7)


def test_tpose_from_clip_makes_that_frame_zero():
    clip = gesture_motion(10)
    tpose = tpose_from_clip(clip, frame=4)

    pose = clip_to_pose(clip, tpose)

    np.testing.assert_allclose(pose.frames[4], 0.0, atol=1e-9)

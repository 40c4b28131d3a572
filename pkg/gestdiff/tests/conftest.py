"""
Shared pytest fixtures for gestdiff tests.
"""

import sys
import os
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

# Keep torch single-threaded so repeated runs are bit-identical
os.environ.setdefault("GESTDIFF_TORCH_THREADS", "1")
os.environ.setdefault("GESTDIFF_WORKERS", "2")

import numpy as np
import pytest
import torch

from gestdiff.core.pipeline_config import PipelineConfig
from gestdiff.domain.motion_models import Joint, MotionClip, Skeleton
from gestdiff.domain.signal_models import AudioTrack
from gestdiff.dsp.audio import write_wav
from gestdiff.motion.bvh import serialize_bvh


ROOT_CHANNELS = ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation")
JOINT_CHANNELS = ("Zrotation", "Xrotation", "Yrotation")

MINIMAL_BVH = """HIERARCHY
ROOT Hips
{
\tOFFSET 0 0 0
\tCHANNELS 3 Zrotation Xrotation Yrotation
\tEnd Site
\t{
\t\tOFFSET 0 1 0
\t}
}
MOTION
Frames: 2
Frame Time: 0.0333333
0 0 0
0 0 0
"""

MAIN_TRANSCRIPT = "0.10\t0.50\thello\n0.50\t0.90\tworld\n1.20\t1.80\tagain\n"
INTERLOCUTOR_TRANSCRIPT = "0.90\t1.20\tyes\n"


@pytest.fixture(autouse=True)
def single_thread_torch():
    """Deterministic torch kernels for every test."""
    torch.set_num_threads(1)
    yield


def make_chain_skeleton(offsets, root_channels=ROOT_CHANNELS, names=None):
    """Serial chain: joint i is the child of joint i - 1."""
    names = names or [f"Joint{index}" for index in range(len(offsets))]
    joints = []
    for index, (name, offset) in enumerate(zip(names, offsets)):
        joints.append(Joint(
            name=name,
            parent=index - 1,
            offset=tuple(float(v) for v in offset),
            channels=root_channels if index == 0 else JOINT_CHANNELS,
        ))
    return Skeleton(joints=tuple(joints))


def make_gesture_skeleton():
    """Hips with a spine and two arms ending in wrists."""
    layout = [
        ("Hips", -1, (0.0, 90.0, 0.0)),
        ("Spine", 0, (0.0, 10.0, 0.0)),
        ("RightArm", 1, (-15.0, 20.0, 0.0)),
        ("RightWrist", 2, (-25.0, 0.0, 0.0)),
        ("LeftArm", 1, (15.0, 20.0, 0.0)),
        ("LeftWrist", 4, (25.0, 0.0, 0.0)),
    ]
    joints = tuple(
        Joint(
            name=name,
            parent=parent,
            offset=offset,
            channels=ROOT_CHANNELS if parent < 0 else JOINT_CHANNELS,
            end_site=(0.0, -5.0, 0.0) if name.endswith("Wrist") else None,
        )
        for name, parent, offset in layout
    )
    return Skeleton(joints=joints)


def gesture_motion(frame_count, frame_rate=30.0, spike_frame=None, seed=0):
    """
    Smooth arm swings on the gesture skeleton.

    With `spike_frame`, the right arm jumps by 40 degrees for that single frame.
    """
    skeleton = make_gesture_skeleton()
    channels = np.zeros((frame_count, skeleton.channel_count))
    starts = skeleton.channel_starts()
    t = np.arange(frame_count) / frame_rate
    phase = np.random.default_rng(seed).uniform(0, np.pi)
    channels[:, starts[2]] = 20.0 * np.sin(2 * np.pi * 0.5 * t + phase)
    channels[:, starts[4]] = -20.0 * np.sin(2 * np.pi * 0.5 * t + phase)
    if spike_frame is not None:
        channels[spike_frame, starts[2]] += 40.0
    return MotionClip(skeleton=skeleton, channels=channels, frame_rate=frame_rate)


def static_motion(frame_count, frame_rate=30.0):
    skeleton = make_gesture_skeleton()
    return MotionClip(skeleton=skeleton, channels=np.zeros((frame_count, skeleton.channel_count)), frame_rate=frame_rate)


def speech_audio(seconds, sample_rate=16000, seed=0, dc_offset=0.01):
    """Noisy voiced signal with a DC offset."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    samples = 0.3 * np.sin(2 * np.pi * 180.0 * t) + 0.05 * rng.standard_normal(t.size) + dc_offset
    return AudioTrack(sample_rate=sample_rate, samples=samples)


@pytest.fixture
def gesture_skeleton():
    return make_gesture_skeleton()


def make_tiny_config(**overrides):
    """Small model sizes so training tests run in seconds on one core."""
    return PipelineConfig.from_dict({
        "seed": 7,
        "motion": {"hampel_window": 5},
        "embeddings": {"dim": 8, "n_mels": 8},
        "csmp": {
            "context_length": 20,
            "hop": 10,
            "speech_dim": 16,
            "model_dim": 16,
            "layers": 1,
            "heads": 2,
            "ff_dim": 32,
            "max_relative_distance": 8,
            "batch_size": 4,
            "learning_rate": 1e-3,
            "train_steps": 5,
            "log_interval": 1,
        },
        "diffusion": {
            "num_steps": 10,
            "residual_blocks": 2,
            "layers_per_block": 1,
            "model_dim": 16,
            "heads": 2,
            "ff_dim": 32,
            "max_relative_distance": 8,
            "step_embedding_dim": 16,
            "window_frames": 20,
            "window_hop": 10,
            "crossfade_frames": 5,
            "batch_size": 4,
            "learning_rate": 1e-3,
            "train_steps": 5,
            "log_interval": 1,
            "validation_fraction": 0.0,
            "validation_interval": 5,
        },
    }).with_overrides(overrides)


@pytest.fixture
def tiny_config():
    return make_tiny_config()


def write_clip_files(directory, clip_id, seconds=2.0, spike_frame=None, static=False, seed=0):
    """Write one two-party clip (BVH, two WAVs, two transcripts); returns the manifest line."""
    directory = Path(directory)
    frame_count = int(round(seconds * 30))
    motion = static_motion(frame_count) if static else gesture_motion(frame_count, spike_frame=spike_frame, seed=seed)
    (directory / f"{clip_id}.bvh").write_text(serialize_bvh(motion), encoding="utf-8")
    write_wav(directory / f"{clip_id}_main.wav", speech_audio(seconds, seed=seed))
    write_wav(directory / f"{clip_id}_other.wav", speech_audio(seconds, seed=seed + 100))
    (directory / f"{clip_id}_main.txt").write_text(MAIN_TRANSCRIPT, encoding="utf-8")
    (directory / f"{clip_id}_other.txt").write_text(INTERLOCUTOR_TRANSCRIPT, encoding="utf-8")
    fields = [
        clip_id, f"{clip_id}.bvh", f"{clip_id}_main.wav", f"{clip_id}_other.wav",
        f"{clip_id}_main.txt", f"{clip_id}_other.txt",
    ]
    return "\t".join(fields) + "\n"


def write_corpus(root, clip_ids, spike=None, static=(), seconds=2.0):
    """Write clips under root/raw with a manifest; returns the manifest path."""
    spike = spike or {}
    raw = Path(root) / "raw"
    raw.mkdir(parents=True, exist_ok=True)
    lines = [
        write_clip_files(raw, clip_id, seconds, spike.get(clip_id), clip_id in static, seed=index)
        for index, clip_id in enumerate(clip_ids)
    ]
    manifest = raw / "manifest.tsv"
    manifest.write_text("# synthetic corpus\n" + "".join(lines), encoding="utf-8")
    return manifest


@pytest.fixture
def corpus_writer(tmp_path):
    """Build a raw corpus with a manifest: corpus_writer(["a", "b"], spike={"b": 30})."""

    def write(clip_ids, spike=None, static=(), seconds=2.0):
        return write_corpus(tmp_path, clip_ids, spike, static, seconds)

    return write

"""
Aligned-clip archives: one `.npz` per clip holding speech streams, motion and
the skeleton needed to turn motion back into BVH.

Archives are written with fixed zip timestamps so identical clips give
identical bytes.
"""
from pathlib import Path
from typing import Optional
import io
import zipfile

import numpy as np

from gestdiff.core.errors import DataError
from gestdiff.domain.embedding_models import AlignedClip
from gestdiff.domain.motion_models import PoseSequence
from gestdiff.motion.bvh import hierarchy_text, skeleton_from_hierarchy


ARCHIVE_SUFFIX = ".npz"
FIXED_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


class ArchiveError(DataError):
    """Raised when a clip archive is missing fields or unreadable."""
    pass


def _array_bytes(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    np.lib.format.write_array(buffer, np.ascontiguousarray(array), allow_pickle=False)
    return buffer.getvalue()


def save_aligned_clip(path: Path, clip: AlignedClip) -> None:
    """
    Write an aligned clip with motion.

    Raises:
        ArchiveError: If the clip carries no motion
    """
    motion = clip.main_motion
    if motion is None:
        raise ArchiveError(f"{clip.clip_id}: only clips with motion can be archived")
    arrays = {
        "clip_id": np.array(clip.clip_id),
        "rate": np.array(clip.rate),
        "main_speech": clip.main_speech.astype(np.float32),
        "interlocutor_speech": clip.interlocutor_speech.astype(np.float32),
        "motion": motion.frames,
        "includes_root_translation": np.array(motion.includes_root_translation),
        "hierarchy": np.array(hierarchy_text(motion.skeleton)),
        "tpose": motion.tpose_matrices(),
        "has_tpose": np.array(motion.tpose is not None),
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as archive:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=FIXED_TIMESTAMP)
            archive.writestr(info, _array_bytes(arrays[name]))


def load_aligned_clip(path: Path) -> AlignedClip:
    """
    Read an archive written by save_aligned_clip.

    Raises:
        ArchiveError: If the file is unreadable or a field is missing
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            skeleton = skeleton_from_hierarchy(str(data["hierarchy"]))
            tpose: Optional[np.ndarray] = data["tpose"] if bool(data["has_tpose"]) else None
            rate = float(data["rate"])
            motion = PoseSequence(
                skeleton=skeleton,
                frames=data["motion"],
                frame_rate=rate,
                includes_root_translation=bool(data["includes_root_translation"]),
                tpose=tpose,
            )
            return AlignedClip(
                clip_id=str(data["clip_id"]),
                rate=rate,
                main_speech=data["main_speech"],
                interlocutor_speech=data["interlocutor_speech"],
                main_motion=motion,
            )
    except KeyError as e:
        raise ArchiveError(f"{path}: archive is missing field {e}")
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise ArchiveError(f"{path}: unreadable archive: {e}")

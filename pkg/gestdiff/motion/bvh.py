"""
BVH reader / writer.

Parses the HIERARCHY and MOTION sections into a Skeleton plus the raw channel
matrix (rotations in decimal degrees), and writes them back losslessly.
"""
from pathlib import Path
from typing import List, Optional, Tuple
import logging

import numpy as np

from gestdiff.core.errors import DataError
from gestdiff.domain.motion_models import Joint, MotionClip, MotionError, Skeleton, POSITION_CHANNELS, ROTATION_CHANNELS


logger = logging.getLogger(__name__)

VALID_CHANNELS = set(ROTATION_CHANNELS) | set(POSITION_CHANNELS)


class BvhParseError(DataError):
    """Raised when BVH text is malformed. Carries the offending 1-based line number."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")


class _LineTokens:
    """Whitespace tokens of a text with the line each token came from."""

    def __init__(self, lines: List[str]):
        self._tokens: List[Tuple[str, int]] = []
        for line_number, line in enumerate(lines, start=1):
            for token in line.split():
                self._tokens.append((token, line_number))
        self._cursor = 0

    def peek(self) -> Tuple[Optional[str], int]:
        if self._cursor >= len(self._tokens):
            last_line = self._tokens[-1][1] if self._tokens else 0
            return None, last_line
        return self._tokens[self._cursor]

    def next(self, expected: Optional[str] = None) -> Tuple[str, int]:
        token, line_number = self.peek()
        if token is None:
            raise BvhParseError(f"unexpected end of hierarchy (expected {expected or 'more tokens'})", line_number)
        if expected is not None and token != expected:
            raise BvhParseError(f"expected '{expected}', found '{token}'", line_number)
        self._cursor += 1
        return token, line_number

    def next_float(self) -> float:
        token, line_number = self.next()
        try:
            return float(token)
        except ValueError:
            raise BvhParseError(f"expected a number, found '{token}'", line_number)

    def next_int(self) -> int:
        token, line_number = self.next()
        try:
            return int(token)
        except ValueError:
            raise BvhParseError(f"expected an integer, found '{token}'", line_number)


def _parse_joint_body(tokens: _LineTokens, name: str, parent: int, joints: List[Joint]) -> None:
    tokens.next("{")
    tokens.next("OFFSET")
    offset = (tokens.next_float(), tokens.next_float(), tokens.next_float())

    _, channels_line = tokens.next("CHANNELS")
    count = tokens.next_int()
    channels = []
    for _ in range(count):
        channel, line_number = tokens.next()
        if channel not in VALID_CHANNELS:
            raise BvhParseError(f"unknown channel '{channel}' on joint '{name}'", line_number)
        channels.append(channel)

    index = len(joints)
    joints.append(Joint(name=name, parent=parent, offset=offset, channels=tuple(channels)))
    end_site = None

    while True:
        token, line_number = tokens.next()
        if token == "}":
            break
        if token == "JOINT":
            child_name, _ = tokens.next()
            _parse_joint_body(tokens, child_name, index, joints)
        elif token == "End":
            tokens.next("Site")
            tokens.next("{")
            tokens.next("OFFSET")
            end_site = (tokens.next_float(), tokens.next_float(), tokens.next_float())
            tokens.next("}")
        else:
            raise BvhParseError(f"unexpected token '{token}' in joint '{name}'", line_number)

    if end_site is not None:
        joint = joints[index]
        joints[index] = Joint(joint.name, joint.parent, joint.offset, joint.channels, end_site)


def parse_bvh(text: str) -> MotionClip:
    """
    Parse BVH text into a skeleton, its channel matrix and the frame rate.

    Args:
        text: Complete BVH document (HIERARCHY + MOTION)

    Returns:
        MotionClip with channel values in the hierarchy's native layout

    Raises:
        BvhParseError: On malformed header, channel/value count mismatch or
            non-positive frame time; the message names the line number
    """
    lines = text.splitlines()
    motion_index = next((i for i, line in enumerate(lines) if line.strip() == "MOTION"), None)
    if motion_index is None:
        raise BvhParseError("missing MOTION section", len(lines))

    tokens = _LineTokens(lines[:motion_index])
    tokens.next("HIERARCHY")
    tokens.next("ROOT")
    root_name, _ = tokens.next()
    joints: List[Joint] = []
    _parse_joint_body(tokens, root_name, -1, joints)
    trailing, trailing_line = tokens.peek()
    if trailing is not None:
        raise BvhParseError(f"unexpected token '{trailing}' after root joint", trailing_line)

    try:
        skeleton = Skeleton(joints=tuple(joints))
    except MotionError as error:
        raise BvhParseError(str(error), motion_index) from error

    frame_count = _parse_header_value(lines, motion_index + 1, "Frames:", int)
    frame_time = _parse_header_value(lines, motion_index + 2, "Frame Time:", float)
    if frame_time <= 0:
        raise BvhParseError(f"frame time must be positive (got: {frame_time})", motion_index + 3)

    channel_count = skeleton.channel_count
    rows = []
    for line_index in range(motion_index + 3, len(lines)):
        line = lines[line_index]
        if not line.strip():
            continue
        values = line.split()
        if len(values) != channel_count:
            raise BvhParseError(
                f"frame has {len(values)} values but the hierarchy declares {channel_count} channels",
                line_index + 1,
            )
        try:
            rows.append([float(value) for value in values])
        except ValueError as error:
            raise BvhParseError(f"non-numeric frame value ({error})", line_index + 1)

    if len(rows) != frame_count:
        raise BvhParseError(f"header declares {frame_count} frames but {len(rows)} were found", motion_index + 2)
    if frame_count < 1:
        raise BvhParseError("motion has no frames", motion_index + 2)

    return MotionClip(skeleton=skeleton, channels=np.array(rows, dtype=np.float64), frame_rate=1.0 / frame_time)


def _parse_header_value(lines: List[str], index: int, label: str, cast):
    if index >= len(lines) or not lines[index].strip().startswith(label):
        raise BvhParseError(f"expected '{label}'", index + 1)
    raw = lines[index].strip()[len(label):].strip()
    try:
        return cast(raw)
    except ValueError:
        raise BvhParseError(f"invalid value for '{label}': '{raw}'", index + 1)


def _fmt(value: float) -> str:
    return format(float(value), ".10g")


def serialize_bvh(clip: MotionClip) -> str:
    """
    Render a MotionClip as BVH text.

    Args:
        clip: Skeleton, channel matrix and frame rate

    Returns:
        BVH document; parse_bvh() of it reproduces the clip within 1e-6
    """
    skeleton = clip.skeleton
    children = {index: [] for index in range(skeleton.joint_count)}
    for index, joint in enumerate(skeleton.joints[1:], start=1):
        children[joint.parent].append(index)

    out = ["HIERARCHY"]

    def emit(index: int, depth: int) -> None:
        joint = skeleton.joints[index]
        pad = "\t" * depth
        keyword = "ROOT" if joint.parent < 0 else "JOINT"
        out.append(f"{pad}{keyword} {joint.name}")
        out.append(f"{pad}{{")
        out.append(f"{pad}\tOFFSET {' '.join(_fmt(v) for v in joint.offset)}")
        out.append(f"{pad}\tCHANNELS {len(joint.channels)} {' '.join(joint.channels)}")
        for child in children[index]:
            emit(child, depth + 1)
        if joint.end_site is not None:
            out.append(f"{pad}\tEnd Site")
            out.append(f"{pad}\t{{")
            out.append(f"{pad}\t\tOFFSET {' '.join(_fmt(v) for v in joint.end_site)}")
            out.append(f"{pad}\t}}")
        out.append(f"{pad}}}")

    emit(0, 0)
    out.append("MOTION")
    out.append(f"Frames: {clip.frame_count}")
    out.append(f"Frame Time: {_fmt(1.0 / clip.frame_rate)}")
    for row in clip.channels:
        out.append(" ".join(_fmt(value) for value in row))
    return "\n".join(out) + "\n"


def hierarchy_text(skeleton: Skeleton) -> str:
    """The HIERARCHY section of a skeleton, used to embed skeletons in artifacts."""
    empty = MotionClip(skeleton=skeleton, channels=np.zeros((1, skeleton.channel_count)), frame_rate=30.0)
    text = serialize_bvh(empty)
    return text[: text.index("MOTION")]


def skeleton_from_hierarchy(text: str) -> Skeleton:
    """Inverse of hierarchy_text()."""
    channel_count = _count_declared_channels(text)
    document = text + "MOTION\nFrames: 1\nFrame Time: 1\n" + " ".join(["0"] * channel_count) + "\n"
    return parse_bvh(document).skeleton


def _count_declared_channels(text: str) -> int:
    total = 0
    for line in text.splitlines():
        parts = line.split()
        if parts and parts[0] == "CHANNELS":
            total += int(parts[1])
    return total


def read_bvh(path: Path) -> MotionClip:
    """
    Read and parse a BVH file.

    Raises:
        BvhParseError: If the file is malformed (message includes the path)
        OSError: If the file cannot be read
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        return parse_bvh(text)
    except BvhParseError as error:
        wrapped = BvhParseError(f"{path}: {error}")
        wrapped.line_number = error.line_number
        raise wrapped from error


def write_bvh(path: Path, clip: MotionClip) -> None:
    """Write a MotionClip as a BVH file."""
    Path(path).write_text(serialize_bvh(clip), encoding="utf-8")
    logger.debug("Wrote %d frames to %s", clip.frame_count, path)

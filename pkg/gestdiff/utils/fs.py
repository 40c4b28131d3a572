"""
Filesystem utilities for scanning inputs and writing deterministic artifacts.
"""
import hashlib
import json
import os
from pathlib import Path
from typing import Any, List, Set


# Directories to ignore when scanning for input files
IGNORED_PATTERNS = {".git", "__pycache__", ".venv", "venv", ".pytest_cache"}


def should_ignore_path(path: Path) -> bool:
    """
    Check if a path should be ignored when scanning for input files.

    Args:
        path: Path object to check

    Returns:
        True if any path component is an ignored directory name
    """
    return any(part in IGNORED_PATTERNS for part in path.parts)


def find_files(directory: Path, suffix: str) -> List[Path]:
    """
    Recursively find files with the given suffix (case-insensitive).

    Args:
        directory: Root directory to search
        suffix: File suffix including the dot, e.g. ".bvh"

    Returns:
        Sorted list of matching paths
    """
    matches = []
    for root, dirs, files in os.walk(directory):
        dirs[:] = sorted(d for d in dirs if d not in IGNORED_PATTERNS)
        root_path = Path(root)
        if should_ignore_path(root_path):
            continue
        for name in files:
            if name.lower().endswith(suffix.lower()):
                matches.append(root_path / name)
    # Sort for deterministic output
    return sorted(matches)


def expand_inputs(paths: List[Path], suffix: str) -> List[Path]:
    """Expand directories into the matching files they contain; files pass through in order."""
    expanded: List[Path] = []
    for path in paths:
        path = Path(path)
        expanded.extend(find_files(path, suffix) if path.is_dir() else [path])
    return expanded


def read_id_list(path: Path) -> Set[str]:
    """
    Read one identifier per line; blank lines and '#' comments are skipped.

    Raises:
        OSError: If the file cannot be read
    """
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        entry = line.split("#", 1)[0].strip()
        if entry:
            ids.add(entry)
    return ids


def sha256_file(path: Path) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: Path, data: Any) -> None:
    """Write JSON with sorted keys so identical data gives identical bytes."""
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def ensure_directory(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path

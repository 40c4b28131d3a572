"""
Corpus manifest reader.

One clip per line:
    clip_id  motion  main_audio  interloc_audio  main_transcript  interloc_transcript
optionally followed by four precomputed embedding files
    main_audio_emb  main_text_emb  interloc_audio_emb  interloc_text_emb
where `-` selects the built-in featurizer. Fields are tab-separated; relative
paths resolve against the manifest's directory.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from gestdiff.core.errors import DataError


FALLBACK_MARKER = "-"
REQUIRED_FIELDS = 6
EMBEDDING_FIELDS = 4


class ManifestError(DataError):
    """Raised when a manifest line is malformed."""
    pass


@dataclass(frozen=True)
class ManifestEntry:
    """Files making up one two-party clip."""
    clip_id: str
    motion: Path
    main_audio: Path
    interlocutor_audio: Path
    main_transcript: Path
    interlocutor_transcript: Path
    main_audio_embeddings: Optional[Path] = None
    main_text_embeddings: Optional[Path] = None
    interlocutor_audio_embeddings: Optional[Path] = None
    interlocutor_text_embeddings: Optional[Path] = None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {name: (str(value) if isinstance(value, Path) else value) for name, value in self.__dict__.items()}


def _resolve(base: Path, value: str) -> Optional[Path]:
    if value == FALLBACK_MARKER:
        return None
    path = Path(value)
    return path if path.is_absolute() else base / path


def parse_manifest(text: str, base_dir: Path = Path("."), source: str = "<manifest>") -> List[ManifestEntry]:
    """
    Parse manifest text.

    Blank lines and lines starting with '#' are ignored.

    Raises:
        ManifestError: On a wrong field count, a missing required path or a duplicate clip id
    """
    entries: List[ManifestEntry] = []
    seen = set()
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [field.strip() for field in stripped.split("\t")]
        if len(fields) not in (REQUIRED_FIELDS, REQUIRED_FIELDS + EMBEDDING_FIELDS):
            raise ManifestError(
                f"{source}:{line_number}: expected {REQUIRED_FIELDS} or "
                f"{REQUIRED_FIELDS + EMBEDDING_FIELDS} tab-separated fields, got {len(fields)}"
            )
        clip_id = fields[0]
        if clip_id in seen:
            raise ManifestError(f"{source}:{line_number}: duplicate clip id '{clip_id}'")
        seen.add(clip_id)
        if FALLBACK_MARKER in fields[1:REQUIRED_FIELDS]:
            raise ManifestError(f"{source}:{line_number}: motion, audio and transcript paths are required")

        required = [_resolve(base_dir, value) for value in fields[1:REQUIRED_FIELDS]]
        optional = [_resolve(base_dir, value) for value in fields[REQUIRED_FIELDS:]]
        optional += [None] * (EMBEDDING_FIELDS - len(optional))
        entries.append(ManifestEntry(clip_id, *required, *optional))
    return entries


def read_manifest(path: Path) -> List[ManifestEntry]:
    """Read a manifest file; relative paths resolve against its directory."""
    path = Path(path)
    return parse_manifest(path.read_text(encoding="utf-8"), base_dir=path.parent, source=str(path))

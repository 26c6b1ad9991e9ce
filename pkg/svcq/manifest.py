"""Corpus manifests: JSON-lines files with one utterance per line.

Each line reads ``{"id": ..., "features": path, "alignment": path,
"split": "train|valid|test", "labels": {...}}``. Relative paths are taken
relative to the manifest's directory.
"""

import json as _json
import logging as _logging
from pathlib import Path as _Path
from typing import Literal as _Literal
from typing import Tuple as _Tuple

from pydantic import BaseModel as _BaseModel
from pydantic import ConfigDict as _ConfigDict
from pydantic import Field as _Field
from pydantic import ValidationError as _ValidationError

from .errors import CorpusError as _CorpusError
from .errors import MalformedJson as _MalformedJson
from .errors import SchemaViolation as _SchemaViolation

_LOGGER = _logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class ManifestEntry(_BaseModel):
    model_config = _ConfigDict(frozen=True, extra="ignore")

    id: str = _Field(min_length=1)
    features: _Path
    alignment: _Path
    split: _Literal["train", "valid", "test"] = "train"
    labels: dict = _Field(default_factory=dict)

    def __str__(self):
        return f"[{self.id}]"


class CorpusManifest:
    """Ordered manifest entries with unique utterance ids."""

    def __init__(self, entries, path=None):
        self._entries = tuple(entries)
        self._path = _Path(path) if path is not None else None
        seen = set()
        duplicates = []
        for entry in self._entries:
            if entry.id in seen:
                duplicates.append(entry.id)
            seen.add(entry.id)
        if duplicates:
            raise _SchemaViolation(
                f"manifest {self._path}: duplicate utterance ids {sorted(set(duplicates))}"
            )

    @property
    def entries(self) -> _Tuple[ManifestEntry, ...]:
        return self._entries

    @property
    def path(self):
        return self._path

    def split(self, name: str) -> _Tuple[ManifestEntry, ...]:
        return tuple(entry for entry in self._entries if entry.split == name)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def check_files(self):
        """Raise a CorpusError naming every entry whose files are missing."""
        missing = {}
        for entry in self._entries:
            problems = [
                f"{kind} file '{path}' not found"
                for kind, path in (("features", entry.features), ("alignment", entry.alignment))
                if not path.is_file()
            ]
            if problems:
                missing[entry.id] = "; ".join(problems)
        if missing:
            raise _CorpusError(
                f"{len(missing)} manifest entries reference missing files", missing
            )


def parse_manifest(text: str, base_directory=None, name: str = "manifest") -> CorpusManifest:
    base_directory = _Path(base_directory) if base_directory is not None else None
    entries = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = _json.loads(line)
        except _json.JSONDecodeError as error:
            raise _MalformedJson(f"{name}:{line_number}: {error}") from error
        try:
            entry = ManifestEntry.model_validate(data)
        except _ValidationError as error:
            raise _SchemaViolation(f"{name}:{line_number}: {error}") from error
        if base_directory is not None:
            entry = entry.model_copy(
                update={
                    "features": base_directory / entry.features,
                    "alignment": base_directory / entry.alignment,
                }
            )
        entries.append(entry)
    return CorpusManifest(entries, name)


def load_manifest(path, check_files: bool = True) -> CorpusManifest:
    path = _Path(path)
    manifest = parse_manifest(
        path.read_text(encoding="utf-8"), base_directory=path.parent, name=str(path)
    )
    if check_files:
        manifest.check_files()
    _LOGGER.info(
        "Manifest '%s': %s",
        path,
        ", ".join(f"{len(manifest.split(split))} {split}" for split in SPLITS),
    )
    return manifest


def write_manifest(entries, path) -> None:
    """Write entries as JSON lines, paths relative to the manifest when possible."""
    path = _Path(path)
    lines = []
    for entry in entries:
        record = entry.model_dump(mode="json")
        for key in ("features", "alignment"):
            value = _Path(getattr(entry, key))
            try:
                record[key] = value.relative_to(path.parent).as_posix()
            except ValueError:
                record[key] = value.as_posix()
        lines.append(_json.dumps(record, sort_keys=True))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

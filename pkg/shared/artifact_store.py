"""
Artifact store for OpenPSPS.

Reads and writes the JSON documents and policy tables that the CLI passes
between commands. Artifact names are validated so a name can never point
outside its directory.

Usage:
    from shared.artifact_store import save_document, load_document

    path = save_document(artifact, "artifacts", "model")
    artifact = load_document(ModelArtifact, path)
"""

import json
import logging
import re
from pathlib import Path
from typing import Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from openpsps.errors import DataError

logger = logging.getLogger(__name__)

Document = TypeVar("Document", bound=BaseModel)

_SUFFIXES = {".json", ".npz", ".csv"}


def _validate_name(name: str) -> str:
    """
    Check that an artifact name is a bare stem such as "model" or "table_s1".

    Raises:
        ValueError: If the name is empty, holds a directory part, or uses
            characters other than letters, digits, "_" and "-"
    """
    if not isinstance(name, str) or not name:
        raise ValueError("artifact name is empty")
    if Path(name).name != name or name in (".", ".."):
        raise ValueError(f"artifact name {name!r} must not contain a directory")
    if not re.fullmatch(r"[\w\-]+", name):
        raise ValueError(f"artifact name {name!r} may only use letters, digits, '_' and '-'")
    return name


def artifact_path(directory: Union[str, Path], name: str, suffix: str = ".json") -> Path:
    """
    Path of a named artifact inside a directory.

    Raises:
        ValueError: If the name or suffix is invalid
    """
    _validate_name(name)
    if suffix not in _SUFFIXES:
        raise ValueError(f"artifact suffix {suffix!r} is not one of {sorted(_SUFFIXES)}")
    return Path(directory) / f"{name}{suffix}"


def document_json(document: BaseModel) -> str:
    """Canonical JSON (sorted keys, aliases, trailing newline) so equal inputs give equal bytes."""
    payload = document.model_dump(mode="json", by_alias=True)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def save_document(document: BaseModel, directory: Union[str, Path], name: str) -> Path:
    """Write a pydantic document as `<directory>/<name>.json`."""
    path = artifact_path(directory, name)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document_json(document), encoding="utf-8")
    logger.info(f"wrote {type(document).__name__} to {path}")
    return path


def load_document(kind: Type[Document], path: Union[str, Path]) -> Document:
    """
    Load and validate a pydantic document.

    Raises:
        FileNotFoundError: If the file doesn't exist
        DataError: If the file is not valid JSON for the document type
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Artifact not found: {path}")
    try:
        return kind.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        first = e.errors()[0]["msg"]
        raise DataError(
            f"invalid {kind.__name__}: {e.error_count()} problem(s), {first}", path=str(path)
        ) from e


def artifact_exists(directory: Union[str, Path], name: str, suffix: str = ".json") -> bool:
    try:
        return artifact_path(directory, name, suffix).exists()
    except ValueError:
        return False

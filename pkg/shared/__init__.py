"""
Shared components for OpenPSPS.

- Constants: Environment-overridable defaults and the published parameter sets
- ArtifactStore: Save and load JSON artifacts by validated name
"""

from .constants import DEFAULT_SEED, DEFAULT_WORKERS
from .artifact_store import artifact_exists, artifact_path, load_document, save_document

__all__ = [
    "DEFAULT_SEED",
    "DEFAULT_WORKERS",
    "artifact_exists",
    "artifact_path",
    "load_document",
    "save_document",
]

"""Run directories: one folder per command invocation, holding its artifacts and manifest."""
from __future__ import annotations

import json
import logging
import os
import uuid
from datetime import datetime, timezone

from src.config import get_config
from src.data import Dataset
from src.errors import CorruptCheckpoint
from src.export import export_json
from src.models import DatasetRef, RunManifest

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _short_uuid() -> str:
    return str(uuid.uuid4())[:8]


def dataset_ref(dataset: Dataset) -> DatasetRef:
    return DatasetRef(name=dataset.name, kind=dataset.kind.value,
                      source=str(dataset.metadata.get("source", "embedded")),
                      fingerprint=dataset.fingerprint(), rows=len(dataset))


def create_run_dir(command: str, out: str | None = None) -> tuple[str, str]:
    """(run id, directory). An explicit `out` is used as is; otherwise a fresh folder under the output root."""
    rid = f"{command}-{datetime.now(timezone.utc):%Y%m%d-%H%M%S}-{_short_uuid()}"
    path = out or os.path.join(get_config().output_dir, rid)
    os.makedirs(path, exist_ok=True)
    return rid, path


def write_manifest(run_dir: str, manifest: RunManifest) -> str:
    path = os.path.join(run_dir, MANIFEST_FILE)
    with open(path, "wb") as f:
        f.write(export_json(manifest.model_dump()))
    logger.info("Manifest written to %s", path)
    return path


def load_manifest(run_dir: str) -> RunManifest:
    path = os.path.join(run_dir, MANIFEST_FILE)
    try:
        with open(path, encoding="utf-8") as f:
            return RunManifest.model_validate(json.load(f))
    except (OSError, ValueError) as e:
        raise CorruptCheckpoint(f"Cannot read manifest {path}: {type(e).__name__}", path=path) from None


def list_runs(root: str | None = None) -> list[RunManifest]:
    """Manifests under the output root, newest first."""
    root = root or get_config().output_dir
    if not os.path.isdir(root):
        return []
    out = []
    for name in os.listdir(root):
        if os.path.isfile(os.path.join(root, name, MANIFEST_FILE)):
            out.append(load_manifest(os.path.join(root, name)))
    return sorted(out, key=lambda m: m.created_at, reverse=True)

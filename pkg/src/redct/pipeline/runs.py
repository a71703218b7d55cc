"""Run manifests: stage DAG enforcement, fingerprints, idempotent reruns.

Every pipeline invocation works inside a run directory holding the manifest
plus all stage artifacts. A stage records a fingerprint of the inputs it
consumed; re-running with unchanged inputs is a byte-for-byte no-op, and
changing an upstream artifact invalidates every downstream fingerprint the
next time that stage is invoked. Stages never start before their
predecessors have completed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

from ..core import RedctError, atomic_write_text

logger = logging.getLogger(__name__)

MANIFEST_KIND = "redct-run-manifest"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

STAGES = ("label", "sample", "annotate", "fuse", "train", "eval")
_PREDECESSORS = {
    "label": (),
    "sample": ("label",),
    "annotate": ("label", "sample"),
    "fuse": ("label", "sample", "annotate"),
    "train": ("fuse",),
    "eval": ("train",),
}

_RUN_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


class StageError(RedctError):
    """A pipeline stage was invoked out of order or its inputs are missing."""


def fingerprint(parts: dict) -> str:
    """Stable digest of a stage's inputs (configs and upstream file digests)."""
    body = json.dumps(parts, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def file_digest(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class StageRecord:
    status: str = "pending"  # pending | complete
    fingerprint: Optional[str] = None
    outputs: Dict[str, str] = field(default_factory=dict)  # name -> run-dir-relative path
    completed_at: Optional[str] = None


@dataclass
class RunManifest:
    run_id: str
    run_dir: Path
    task_id: str
    backend_id: str
    prompt_style: str
    created_at: str
    stages: Dict[str, StageRecord] = field(default_factory=dict)
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for stage in STAGES:
            self.stages.setdefault(stage, StageRecord())

    def stage(self, name: str) -> StageRecord:
        if name not in self.stages:
            raise StageError(f"unknown stage {name!r}; stages are {list(STAGES)}")
        return self.stages[name]

    def path_of(self, stage: str, output: str) -> Path:
        rec = self.stage(stage)
        if output not in rec.outputs:
            raise StageError(f"stage {stage!r} has no recorded output {output!r}")
        return self.run_dir / rec.outputs[output]

    def require_complete(self, *names: str) -> None:
        missing = [n for n in names if self.stage(n).status != "complete"]
        if missing:
            raise StageError(
                f"run {self.run_id}: stage(s) {', '.join(missing)} not complete yet; "
                f"run the pipeline in order {' -> '.join(STAGES)}"
            )

    def check_can_run(self, stage: str) -> None:
        """DAG gate: all predecessors must be complete before a stage starts."""
        self.require_complete(*_PREDECESSORS[stage])

    def up_to_date(self, stage: str, fp: str) -> bool:
        """True when the stage already completed for exactly these inputs."""
        rec = self.stage(stage)
        if rec.status != "complete" or rec.fingerprint != fp:
            return False
        missing = [p for p in rec.outputs.values() if not (self.run_dir / p).exists()]
        if missing:
            logger.warning("run %s stage %s: recorded outputs missing (%s); re-running",
                           self.run_id, stage, ", ".join(missing))
            return False
        return True

    def mark_complete(self, stage: str, fp: str, outputs: Dict[str, str]) -> None:
        rec = self.stage(stage)
        rec.status = "complete"
        rec.fingerprint = fp
        rec.outputs = dict(outputs)
        rec.completed_at = _utc_now()

    def invalidate_downstream(self, stage: str) -> None:
        """Mark every stage after `stage` pending (inputs changed)."""
        seen = False
        for name in STAGES:
            if name == stage:
                seen = True
                continue
            if seen and self.stages[name].status == "complete":
                self.stages[name] = StageRecord()

    def to_json(self) -> dict:
        return {
            "kind": MANIFEST_KIND,
            "version": MANIFEST_VERSION,
            "run_id": self.run_id,
            "task_id": self.task_id,
            "backend_id": self.backend_id,
            "prompt_style": self.prompt_style,
            "created_at": self.created_at,
            "meta": self.meta,
            "stages": {
                name: {
                    "status": rec.status,
                    "fingerprint": rec.fingerprint,
                    "outputs": rec.outputs,
                    "completed_at": rec.completed_at,
                }
                for name, rec in self.stages.items()
            },
        }


def save_manifest(manifest: RunManifest) -> None:
    atomic_write_text(
        manifest.run_dir / MANIFEST_NAME,
        json.dumps(manifest.to_json(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
    )


def load_manifest(run_dir: Path) -> RunManifest:
    path = run_dir / MANIFEST_NAME
    if not path.is_file():
        raise StageError(f"no run manifest at {path}")
    raw = json.loads(path.read_text(encoding="utf-8"))
    if raw.get("kind") != MANIFEST_KIND:
        raise StageError(f"{path}: not a run manifest")
    if raw.get("version") != MANIFEST_VERSION:
        raise StageError(f"{path}: unsupported manifest version {raw.get('version')!r}")
    stages = {
        name: StageRecord(
            status=rec.get("status", "pending"),
            fingerprint=rec.get("fingerprint"),
            outputs=dict(rec.get("outputs", {})),
            completed_at=rec.get("completed_at"),
        )
        for name, rec in raw.get("stages", {}).items()
    }
    return RunManifest(
        run_id=raw["run_id"],
        run_dir=run_dir,
        task_id=raw["task_id"],
        backend_id=raw["backend_id"],
        prompt_style=raw["prompt_style"],
        created_at=raw["created_at"],
        stages=stages,
        meta=dict(raw.get("meta", {})),
    )


class RunStore:
    """Creates and locates run directories under runs_dir."""

    def __init__(self, runs_dir: Path | str):
        self.runs_dir = Path(runs_dir)

    def run_dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def existing_run_ids(self) -> list[str]:
        if not self.runs_dir.is_dir():
            return []
        return sorted(
            d.name for d in self.runs_dir.iterdir()
            if d.is_dir() and (d / MANIFEST_NAME).is_file()
        )

    def next_run_id(self) -> str:
        taken = set(self.existing_run_ids())
        i = 1
        while f"run-{i:04d}" in taken:
            i += 1
        return f"run-{i:04d}"

    def latest_run_id(self) -> str:
        ids = self.existing_run_ids()
        if not ids:
            raise StageError(f"no runs found under {self.runs_dir}; start with `redct label`")
        return ids[-1]

    def create(self, run_id: Optional[str], task_id: str, backend_id: str,
               prompt_style: str) -> RunManifest:
        run_id = run_id or self.next_run_id()
        if not _RUN_ID_RE.match(run_id):
            raise StageError(f"invalid run id {run_id!r} (letters, digits, . _ - only)")
        run_dir = self.run_dir(run_id)
        run_dir.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            run_id=run_id,
            run_dir=run_dir,
            task_id=task_id,
            backend_id=backend_id,
            prompt_style=prompt_style,
            created_at=_utc_now(),
        )
        save_manifest(manifest)
        logger.info("created run %s at %s", run_id, run_dir)
        return manifest

    def open_or_create(self, run_id: Optional[str], task_id: str, backend_id: str,
                       prompt_style: str) -> RunManifest:
        """Load an existing run, or create one (generated id when None)."""
        if run_id is not None and (self.run_dir(run_id) / MANIFEST_NAME).is_file():
            return load_manifest(self.run_dir(run_id))
        return self.create(run_id, task_id, backend_id, prompt_style)

    def open(self, run_id: Optional[str]) -> RunManifest:
        """Load a run; when run_id is None, use the most recent run."""
        if run_id is None:
            run_id = self.latest_run_id()
            logger.info("using latest run %s", run_id)
        run_dir = self.run_dir(run_id)
        if not (run_dir / MANIFEST_NAME).is_file():
            raise StageError(f"run {run_id!r} not found under {self.runs_dir}")
        return load_manifest(run_dir)

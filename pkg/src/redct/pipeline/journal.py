"""Crash-safe append-only journal for accepted annotation labels.

Every accepted expert label is flushed and fsynced before the HTTP response
goes out, so killing the service loses nothing. Replay tolerates exactly
one torn record at the tail (the write the crash interrupted); corruption
anywhere else is a real error and reported as such.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import List

from ..core import RedctError

logger = logging.getLogger(__name__)


class JournalError(RedctError):
    """Journal file is corrupt beyond the recoverable torn tail."""


@dataclass(frozen=True)
class JournalEntry:
    doc_id: str
    annotator: str
    class_name: str
    timestamp: str


def replay_journal(path: Path | str) -> List[JournalEntry]:
    """Parse all complete records; ignore a torn final line if present."""
    path = Path(path)
    if not path.exists():
        return []
    entries: List[JournalEntry] = []
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entries.append(
                JournalEntry(
                    doc_id=rec["doc_id"],
                    annotator=rec["annotator"],
                    class_name=rec["class_name"],
                    timestamp=rec.get("timestamp", ""),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            tail = all(not rest.strip() for rest in lines[i + 1 :])
            if tail:
                logger.warning("%s: dropping torn final journal record (%s)", path, exc)
                break
            raise JournalError(f"{path}: corrupt journal record on line {i + 1}: {exc}") from None
    return entries


class LabelJournal:
    """Single-writer append log; callers serialize through their own lock."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, doc_id: str, annotator: str, class_name: str) -> JournalEntry:
        entry = JournalEntry(
            doc_id=doc_id,
            annotator=annotator,
            class_name=class_name,
            timestamp=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ"),
        )
        line = json.dumps(
            {
                "doc_id": entry.doc_id,
                "annotator": entry.annotator,
                "class_name": entry.class_name,
                "timestamp": entry.timestamp,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        self._fh.write(line + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())
        return entry

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "LabelJournal":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

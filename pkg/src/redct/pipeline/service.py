"""HTTP annotation service: task leasing, label journal, progress, static UI.

Experts label the sampled documents through this service (usually via the
bundled browser UI). Task assignment uses short-lived leases: an annotator
gets the first pending task in sampling order, holds it until submission or
lease expiry, and expired tasks silently return to the pool. All state
changes are serialized through one lock and every accepted label hits the
fsynced journal before the 200 goes out.

By default task payloads do NOT include the LLM's suggested label or its
confidence — showing them would anchor the annotators whose judgments are
supposed to correct the LLM. `reveal_llm_label=True` opts in explicitly.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Dict, List, Optional, Tuple
from urllib.parse import parse_qs, urlparse

from ..core import Dataset, RedctError, atomic_write_text
from ..sampler import SamplingManifest
from .journal import LabelJournal, replay_journal

logger = logging.getLogger(__name__)

EXPERT_LABELS_KIND = "redct-expert-labels"

_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json; charset=utf-8",
}

_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>redct annotation</title></head>
<body><h1>redct annotation service</h1>
<p>No UI bundle is installed. The JSON API is live:</p>
<ul>
<li>GET /api/schema</li>
<li>GET /api/tasks/next?annotator=&lt;id&gt;</li>
<li>POST /api/tasks/&lt;doc_id&gt;/label</li>
<li>GET /api/progress</li>
</ul></body></html>
"""


@dataclass
class AnnotationTask:
    """Server-side task state; guarded by the service lock."""

    doc_id: str
    text: str
    target: Optional[str]
    state: str = "pending"  # pending | assigned | completed
    assigned_to: Optional[str] = None
    lease_expiry: float = 0.0
    submitted_label: Optional[int] = None
    submitted_by: Optional[str] = None


def write_expert_labels_file(path: Path | str, labels: Dict[str, str],
                             annotators: Dict[str, str], oracle: bool) -> None:
    """Persist accepted labels (class names) plus who provided them."""
    atomic_write_text(
        path,
        json.dumps(
            {
                "kind": EXPERT_LABELS_KIND,
                "version": 1,
                "oracle": oracle,
                "labels": labels,
                "annotators": annotators,
            },
            sort_keys=True,
            indent=2,
            ensure_ascii=False,
        )
        + "\n",
    )


def read_expert_labels_file(path: Path | str) -> Tuple[Dict[str, str], bool]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("kind") != EXPERT_LABELS_KIND:
        raise RedctError(f"{path}: not an expert-labels file")
    return dict(raw["labels"]), bool(raw.get("oracle", False))


class AnnotationService:
    """Owns task state and the journal; the HTTP handler delegates here."""

    def __init__(
        self,
        ds: Dataset,
        manifest: SamplingManifest,
        journal_path: Path | str,
        output_path: Path | str,
        lease_seconds: float = 300.0,
        reveal_llm_label: bool = False,
        static_dir: Optional[Path] = None,
        clock=time.monotonic,
    ):
        self.ds = ds
        self.schema = ds.schema
        self.lease_seconds = lease_seconds
        self.reveal_llm_label = reveal_llm_label
        self.static_dir = Path(static_dir) if static_dir else None
        self.output_path = Path(output_path)
        self.clock = clock
        self.lock = threading.Lock()
        self.all_done = threading.Event()

        self.tasks: Dict[str, AnnotationTask] = {}
        self.order: List[str] = []
        for doc_id in manifest.selected_doc_ids:
            doc = ds.doc_by_id(doc_id)
            self.tasks[doc_id] = AnnotationTask(doc_id=doc_id, text=doc.text, target=doc.target)
            self.order.append(doc_id)

        # Replay previously accepted labels before opening for business.
        for entry in replay_journal(journal_path):
            task = self.tasks.get(entry.doc_id)
            if task is None:
                logger.warning("journal names unknown doc %r; ignoring", entry.doc_id)
                continue
            task.state = "completed"
            task.submitted_label = self.schema.index_of(entry.class_name)
            task.submitted_by = entry.annotator
        self.journal = LabelJournal(journal_path)
        if self._completed_count() == len(self.tasks):
            self._finish()

    # -- state helpers (call with self.lock held) --

    def _completed_count(self) -> int:
        return sum(1 for t in self.tasks.values() if t.state == "completed")

    def _expire_leases(self) -> None:
        now = self.clock()
        for task in self.tasks.values():
            if task.state == "assigned" and now > task.lease_expiry:
                logger.info("lease expired on %s (held by %s)", task.doc_id, task.assigned_to)
                task.state = "pending"
                task.assigned_to = None

    def _task_payload(self, task: AnnotationTask) -> dict:
        payload = {
            "doc_id": task.doc_id,
            "text": task.text,
            "target": task.target,
            "class_names": list(self.schema.class_names),
            "lease_seconds": self.lease_seconds,
        }
        if self.reveal_llm_label:
            ann = self.ds.annotations.get(task.doc_id)
            if ann is not None:
                payload["llm_suggestion"] = self.schema.class_names[ann.predicted_class]
                payload["llm_confidence"] = ann.confidence
        return payload

    def _finish(self) -> None:
        labels = {}
        annotators = {}
        for doc_id in self.order:
            task = self.tasks[doc_id]
            labels[doc_id] = self.schema.class_names[task.submitted_label]
            annotators[doc_id] = task.submitted_by or "unknown"
        write_expert_labels_file(self.output_path, labels, annotators, oracle=False)
        self.all_done.set()
        logger.info("all %d annotation tasks completed; labels written to %s",
                    len(self.tasks), self.output_path)

    # -- API operations --

    def next_task(self, annotator: str) -> Optional[dict]:
        """Assign (or re-serve) the next task for this annotator; None when idle."""
        with self.lock:
            self._expire_leases()
            for doc_id in self.order:
                task = self.tasks[doc_id]
                if task.state == "assigned" and task.assigned_to == annotator:
                    task.lease_expiry = self.clock() + self.lease_seconds
                    return self._task_payload(task)
            for doc_id in self.order:
                task = self.tasks[doc_id]
                if task.state == "pending":
                    task.state = "assigned"
                    task.assigned_to = annotator
                    task.lease_expiry = self.clock() + self.lease_seconds
                    return self._task_payload(task)
            return None

    def submit_label(self, doc_id: str, annotator: str, class_name: str) -> Tuple[int, dict]:
        """Returns (http status, response body)."""
        try:
            class_index = self.schema.index_of(class_name)
        except RedctError:
            return 400, {"error": f"unknown class {class_name!r}; "
                                  f"valid: {list(self.schema.class_names)}"}
        with self.lock:
            task = self.tasks.get(doc_id)
            if task is None:
                return 404, {"error": f"no such annotation task {doc_id!r}"}
            self._expire_leases()
            if task.state == "completed":
                return 409, {"error": "conflict", "reason": "task already completed"}
            if task.state != "assigned" or task.assigned_to != annotator:
                # Covers both foreign leases and this annotator's expired lease:
                # the task went back to the pool, so the submission is stale.
                return 409, {"error": "conflict",
                             "reason": "task is not currently leased to this annotator"}
            self.journal.append(doc_id, annotator, class_name)
            task.state = "completed"
            task.submitted_label = class_index
            task.submitted_by = annotator
            completed = self._completed_count()
            if completed == len(self.tasks):
                self._finish()
            return 200, {"ok": True, "completed": completed, "total": len(self.tasks)}

    def progress(self) -> dict:
        with self.lock:
            per_class = {name: 0 for name in self.schema.class_names}
            for task in self.tasks.values():
                if task.state == "completed":
                    per_class[self.schema.class_names[task.submitted_label]] += 1
            completed = self._completed_count()
            return {
                "completed": completed,
                "total": len(self.tasks),
                "per_class": per_class,
                "done": completed == len(self.tasks),
            }

    def schema_info(self) -> dict:
        return {
            "task_id": self.schema.task_id,
            "class_names": list(self.schema.class_names),
            "label_tokens": dict(self.schema.label_tokens),
            "reveal_llm_label": self.reveal_llm_label,
            "description": f"Label each document with one of "
                           f"{len(self.schema.class_names)} classes.",
        }

    # -- static files --

    def static_file(self, url_path: str) -> Optional[Tuple[bytes, str]]:
        if self.static_dir is None or not self.static_dir.is_dir():
            if url_path in ("/", "/index.html"):
                return _FALLBACK_PAGE.encode("utf-8"), _STATIC_TYPES[".html"]
            return None
        rel = url_path.lstrip("/") or "index.html"
        root = self.static_dir.resolve()
        target = (root / rel).resolve()
        if root not in target.parents and target != root:
            return None  # path escape attempt
        if target.is_dir():
            target = target / "index.html"
        if not target.is_file():
            return None
        ctype = _STATIC_TYPES.get(target.suffix.lower(), "application/octet-stream")
        return target.read_bytes(), ctype

    def close(self) -> None:
        self.journal.close()


class _Handler(BaseHTTPRequestHandler):
    service: AnnotationService  # set on the subclass by serve()

    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        logger.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self) -> None:
        parsed = urlparse(self.path)
        path = parsed.path
        if path == "/api/tasks/next":
            params = parse_qs(parsed.query)
            annotator = (params.get("annotator") or [""])[0].strip()
            if not annotator:
                self._send_json(400, {"error": "annotator query parameter required"})
                return
            task = self.service.next_task(annotator)
            if task is None:
                self.send_response(204)
                self.send_header("Content-Length", "0")
                self.end_headers()
                return
            self._send_json(200, task)
        elif path == "/api/progress":
            self._send_json(200, self.service.progress())
        elif path == "/api/schema":
            self._send_json(200, self.service.schema_info())
        else:
            found = self.service.static_file(path)
            if found is None:
                self._send_json(404, {"error": f"not found: {path}"})
                return
            data, ctype = found
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    def do_POST(self) -> None:
        parsed = urlparse(self.path)
        parts = parsed.path.strip("/").split("/")
        # expected: api / tasks / <doc_id> / label
        if len(parts) == 4 and parts[0] == "api" and parts[1] == "tasks" and parts[3] == "label":
            doc_id = parts[2]
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length).decode("utf-8")) if length else {}
            except (ValueError, json.JSONDecodeError):
                self._send_json(400, {"error": "request body must be JSON"})
                return
            annotator = str(body.get("annotator", "")).strip()
            class_name = body.get("class_name")
            if not annotator or not isinstance(class_name, str):
                self._send_json(400, {"error": "body must contain annotator and class_name"})
                return
            status, payload = self.service.submit_label(doc_id, annotator, class_name)
            self._send_json(status, payload)
        else:
            self._send_json(404, {"error": f"not found: {parsed.path}"})


class AnnotationServer:
    """ThreadingHTTPServer wrapper with programmatic start/stop."""

    def __init__(self, service: AnnotationService, host: str = "127.0.0.1", port: int = 8765):
        handler = type("BoundHandler", (_Handler,), {"service": service})
        try:
            self.httpd = ThreadingHTTPServer((host, port), handler)
        except OSError as exc:
            raise RedctError(f"cannot bind annotation service to {host}:{port}: {exc}") from None
        self.service = service
        self.thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        return self.httpd.server_address[0], self.httpd.server_address[1]

    def start(self) -> None:
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()
        logger.info("annotation service listening on http://%s:%d", *self.address)

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self.thread is not None:
            self.thread.join(timeout=5)
        self.service.close()

    def wait_until_done(self, poll_seconds: float = 0.25) -> None:
        """Block until every task is completed (Ctrl-C to stop early)."""
        while not self.service.all_done.wait(timeout=poll_seconds):
            pass

"""Shared task schema, document, label, and dataset containers.

Every other module builds on these types. Values are immutable after
construction; "mutation" always means building a new object, so datasets
can be shared freely across concurrent workers.

On-disk format is JSONL. A file written by :func:`save_dataset` starts with
a single header manifest line (``{"kind": "redct-dataset", ...}``) followed
by one record per document; :func:`load_dataset` also accepts headerless
files containing bare document records, which is the interchange format for
user-supplied corpora. Class labels are stored as class-name strings in
files and as integer indices in memory.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

PROMPT_STYLES = ("zero_shot", "zero_shot_cot")
LABEL_SOURCES = ("llm", "expert")

DATASET_KIND = "redct-dataset"
DATASET_VERSION = 1

# Sum-to-one tolerance for probability vectors.
PROB_TOL = 1e-9


class RedctError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(RedctError):
    """Invalid task schema definition."""


class DatasetError(RedctError):
    """Malformed dataset file or violated dataset invariant."""


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write `text` to `path` atomically (write temp file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def label_matching_key(token: str) -> str:
    """Normalized key used to match generated tokens against a label token.

    The key is the first whitespace-separated word of the canonical answer
    string, stripped of surrounding punctuation and lowercased. A generated
    token matches a class when the class key starts with the token's own
    normalized form, which copes with sub-word API tokens ("Mis" matching
    "Misinformation"). Schemas must therefore have pairwise-distinct,
    prefix-free keys; see :meth:`TaskSchema.validate`.
    """
    word = token.strip().split()[0] if token.strip() else ""
    return word.strip(string.punctuation).lower()


@dataclass(frozen=True)
class TaskSchema:
    """Classification task definition: classes and their answer tokens.

    `label_tokens` maps each class name to the canonical answer string the
    LLM is instructed to reply with (e.g. "For", "Against", "Neutral").
    """

    task_id: str
    class_names: tuple[str, ...]
    label_tokens: Mapping[str, str]
    prompt_style: str = "zero_shot"

    def __post_init__(self) -> None:
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "label_tokens", dict(self.label_tokens))
        self.validate()

    def validate(self) -> None:
        if not self.task_id:
            raise SchemaError("task_id must be nonempty")
        k = len(self.class_names)
        if k < 2:
            raise SchemaError(f"need at least 2 classes, got {k}")
        if len(set(self.class_names)) != k:
            raise SchemaError(f"class names not unique: {self.class_names}")
        if set(self.label_tokens) != set(self.class_names):
            raise SchemaError(
                "label_tokens keys must equal class_names: "
                f"{sorted(self.label_tokens)} vs {sorted(self.class_names)}"
            )
        tokens = [self.label_tokens[c] for c in self.class_names]
        if len(set(tokens)) != k:
            raise SchemaError(f"label tokens not pairwise distinct: {tokens}")
        keys = [label_matching_key(t) for t in tokens]
        for c, key in zip(self.class_names, keys):
            if not key:
                raise SchemaError(f"label token for class {c!r} has empty matching key")
        if len(set(keys)) != k:
            raise SchemaError(f"label token matching keys collide: {keys}")
        for i in range(k):
            for j in range(k):
                if i != j and keys[i].startswith(keys[j]):
                    raise SchemaError(
                        "label token matching keys must be prefix-free: "
                        f"{keys[j]!r} is a prefix of {keys[i]!r}"
                    )
        if self.prompt_style not in PROMPT_STYLES:
            raise SchemaError(
                f"prompt_style must be one of {PROMPT_STYLES}, got {self.prompt_style!r}"
            )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def index_of(self, class_name: str) -> int:
        try:
            return self.class_names.index(class_name)
        except ValueError:
            raise SchemaError(
                f"unknown class {class_name!r} for task {self.task_id!r} "
                f"(classes: {list(self.class_names)})"
            ) from None

    def matching_keys(self) -> list[str]:
        """Per-class matching keys, in class order."""
        return [label_matching_key(self.label_tokens[c]) for c in self.class_names]

    def schema_hash(self) -> str:
        """Stable content hash binding model artifacts to this schema."""
        payload = json.dumps(
            {
                "task_id": self.task_id,
                "class_names": list(self.class_names),
                "label_tokens": {c: self.label_tokens[c] for c in self.class_names},
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Document:
    """One unlabeled text item, with optional stance target and gold label."""

    doc_id: str
    text: str
    target: Optional[str] = None
    gold_label: Optional[int] = None


@dataclass(frozen=True)
class SoftLabel:
    """Probability vector over task classes, tagged with its source."""

    probs: tuple[float, ...]
    source: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if self.source not in LABEL_SOURCES:
            raise RedctError(f"label source must be one of {LABEL_SOURCES}, got {self.source!r}")
        if any(p < 0.0 for p in self.probs):
            raise RedctError(f"soft label entries must be nonnegative: {self.probs}")
        total = sum(self.probs)
        if abs(total - 1.0) > PROB_TOL:
            raise RedctError(f"soft label must sum to 1 within {PROB_TOL}, got {total!r}")
        if self.source == "expert" and sum(1 for p in self.probs if p == 1.0) != 1:
            raise RedctError(f"expert label must be one-hot, got {self.probs}")


@dataclass(frozen=True)
class LabelTokenLogProbs:
    """Natural-log probabilities for each class answer token, class order."""

    per_class_logprob: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.per_class_logprob)
        object.__setattr__(self, "per_class_logprob", vals)
        if any(not math.isfinite(v) for v in vals):
            raise RedctError(f"label token log-probs must be finite: {vals}")

    def __len__(self) -> int:
        return len(self.per_class_logprob)


@dataclass(frozen=True)
class LlmAnnotation:
    """LLM prediction for one document, with log-probs and confidence.

    `predicted_class` is always the argmax of `logprobs` (lowest index wins
    ties) and `confidence` the gap between its top two entries; use
    `labeler.make_annotation` rather than constructing by hand.
    """

    doc_id: str
    predicted_class: int
    logprobs: LabelTokenLogProbs
    confidence: float
    prompt_style: str
    raw_response: str = ""
    rationale: Optional[str] = None
    abstained: bool = False


@dataclass(frozen=True)
class Dataset:
    """A corpus plus whatever labeling state it has accumulated."""

    schema: TaskSchema
    documents: tuple[Document, ...]
    annotations: Mapping[str, LlmAnnotation] = field(default_factory=dict)
    expert_labels: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "documents", tuple(self.documents))
        object.__setattr__(self, "annotations", dict(self.annotations))
        object.__setattr__(self, "expert_labels", dict(self.expert_labels))
        self.validate()

    def validate(self) -> None:
        k = self.schema.num_classes
        seen: set[str] = set()
        for doc in self.documents:
            if not doc.doc_id:
                raise DatasetError("document with empty doc_id")
            if doc.doc_id in seen:
                raise DatasetError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            if not doc.text:
                raise DatasetError(f"document {doc.doc_id!r} has empty text")
            if doc.gold_label is not None and not 0 <= doc.gold_label < k:
                raise DatasetError(
                    f"document {doc.doc_id!r} gold_label {doc.gold_label} out of range [0, {k})"
                )
        for doc_id, ann in self.annotations.items():
            if doc_id not in seen:
                raise DatasetError(f"annotation for unknown doc_id {doc_id!r}")
            if ann.doc_id != doc_id:
                raise DatasetError(f"annotation keyed {doc_id!r} but carries doc_id {ann.doc_id!r}")
            if len(ann.logprobs) != k:
                raise DatasetError(
                    f"annotation for {doc_id!r} has {len(ann.logprobs)} log-probs, expected {k}"
                )
        for doc_id, label in self.expert_labels.items():
            if doc_id not in seen:
                raise DatasetError(f"expert label for unknown doc_id {doc_id!r}")
            if not 0 <= label < k:
                raise DatasetError(f"expert label {label} for {doc_id!r} out of range [0, {k})")

    def __len__(self) -> int:
        return len(self.documents)

    def doc_by_id(self, doc_id: str) -> Document:
        for doc in self.documents:
            if doc.doc_id == doc_id:
                return doc
        raise DatasetError(f"no document with doc_id {doc_id!r}")

    def with_annotations(self, annotations: Mapping[str, LlmAnnotation]) -> "Dataset":
        """New dataset with `annotations` merged over the existing ones."""
        merged = dict(self.annotations)
        merged.update(annotations)
        return Dataset(self.schema, self.documents, merged, self.expert_labels)

    def with_expert_labels(self, labels: Mapping[str, int]) -> "Dataset":
        """New dataset with `labels` merged over the existing expert labels."""
        merged = dict(self.expert_labels)
        merged.update(labels)
        return Dataset(self.schema, self.documents, self.annotations, merged)


# -- JSONL serialization --


def _annotation_to_record(ann: LlmAnnotation, schema: TaskSchema) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "predicted_class": schema.class_names[ann.predicted_class],
        "logprobs": list(ann.logprobs.per_class_logprob),
        "confidence": ann.confidence,
        "prompt_style": ann.prompt_style,
        "raw_response": ann.raw_response,
    }
    if ann.rationale is not None:
        rec["rationale"] = ann.rationale
    if ann.abstained:
        rec["abstained"] = True
    return rec


def _annotation_from_record(rec: dict[str, Any], doc_id: str, schema: TaskSchema) -> LlmAnnotation:
    return LlmAnnotation(
        doc_id=doc_id,
        predicted_class=schema.index_of(rec["predicted_class"]),
        logprobs=LabelTokenLogProbs(tuple(rec["logprobs"])),
        confidence=float(rec["confidence"]),
        prompt_style=rec["prompt_style"],
        raw_response=rec.get("raw_response", ""),
        rationale=rec.get("rationale"),
        abstained=bool(rec.get("abstained", False)),
    )


def _document_record(ds: Dataset, doc: Document) -> dict[str, Any]:
    rec: dict[str, Any] = {"doc_id": doc.doc_id, "text": doc.text}
    if doc.target is not None:
        rec["target"] = doc.target
    if doc.gold_label is not None:
        rec["gold_label"] = ds.schema.class_names[doc.gold_label]
    ann = ds.annotations.get(doc.doc_id)
    if ann is not None:
        rec["annotation"] = _annotation_to_record(ann, ds.schema)
    if doc.doc_id in ds.expert_labels:
        rec["expert_label"] = ds.schema.class_names[ds.expert_labels[doc.doc_id]]
    return rec


def _parse_document_record(
    rec: dict[str, Any], schema: TaskSchema, line_no: int, path: Path
) -> tuple[Document, Optional[LlmAnnotation], Optional[int]]:
    def fail(msg: str) -> DatasetError:
        return DatasetError(f"{path}:{line_no}: {msg}")

    if not isinstance(rec, dict):
        raise fail(f"expected a JSON object, got {type(rec).__name__}")
    doc_id = rec.get("doc_id")
    if not isinstance(doc_id, str) or not doc_id:
        raise fail("missing or empty doc_id")
    text = rec.get("text")
    if not isinstance(text, str) or not text:
        raise fail(f"doc {doc_id!r}: missing or empty text")
    target = rec.get("target")
    if target is not None and not isinstance(target, str):
        raise fail(f"doc {doc_id!r}: target must be a string")
    gold = None
    if "gold_label" in rec and rec["gold_label"] is not None:
        try:
            gold = schema.index_of(rec["gold_label"])
        except SchemaError as exc:
            raise fail(f"doc {doc_id!r}: {exc}") from None
    annotation = None
    if "annotation" in rec and rec["annotation"] is not None:
        try:
            annotation = _annotation_from_record(rec["annotation"], doc_id, schema)
        except (KeyError, SchemaError, RedctError, TypeError, ValueError) as exc:
            raise fail(f"doc {doc_id!r}: bad annotation: {exc}") from None
    expert = None
    if "expert_label" in rec and rec["expert_label"] is not None:
        try:
            expert = schema.index_of(rec["expert_label"])
        except SchemaError as exc:
            raise fail(f"doc {doc_id!r}: {exc}") from None
    return Document(doc_id, text, target, gold), annotation, expert


def load_dataset(path: Path | str, schema: TaskSchema) -> Dataset:
    """Load a dataset from JSONL, preserving file order.

    Accepts both the headered format produced by :func:`save_dataset` and
    plain document-record JSONL. Errors report the offending line number.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    documents: list[Document] = []
    annotations: dict[str, LlmAnnotation] = {}
    expert_labels: dict[str, int] = {}
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{line_no}: malformed JSON: {exc}") from None
            if isinstance(rec, dict) and rec.get("kind") == DATASET_KIND:
                if documents:
                    raise DatasetError(f"{path}:{line_no}: header manifest after records")
                if rec.get("version") != DATASET_VERSION:
                    raise DatasetError(
                        f"{path}:{line_no}: unsupported dataset version {rec.get('version')!r}"
                    )
                if rec.get("task_id") != schema.task_id:
                    raise DatasetError(
                        f"{path}:{line_no}: file is for task {rec.get('task_id')!r}, "
                        f"expected {schema.task_id!r}"
                    )
                continue
            doc, ann, expert = _parse_document_record(rec, schema, line_no, path)
            if doc.doc_id in seen:
                raise DatasetError(f"{path}:{line_no}: duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            documents.append(doc)
            if ann is not None:
                annotations[doc.doc_id] = ann
            if expert is not None:
                expert_labels[doc.doc_id] = expert
    return Dataset(schema, tuple(documents), annotations, expert_labels)


def save_dataset(ds: Dataset, path: Path | str) -> None:
    """Write a dataset as headered JSONL; byte-stable for equal datasets.

    ``load_dataset(save_dataset(ds)) == ds`` field for field, in document
    order. The write is atomic (temp file + rename).
    """
    header = {
        "kind": DATASET_KIND,
        "version": DATASET_VERSION,
        "task_id": ds.schema.task_id,
        "count": len(ds.documents),
    }
    lines = [json.dumps(header, sort_keys=True, ensure_ascii=False)]
    for doc in ds.documents:
        lines.append(json.dumps(_document_record(ds, doc), sort_keys=True, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + "\n")

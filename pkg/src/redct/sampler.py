"""Selection of LLM-labeled items for human expert review.

Two strategies: a uniform random baseline, and confidence-informed
sampling, which stratifies by the LLM's predicted class and takes the
lowest-confidence fraction of each class. Stratifying per class (rather
than taking the global bottom fraction) is what repairs class-biased
labelers: a class the LLM gets systematically wrong still contributes
its share of expert items.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .core import Dataset, RedctError, atomic_write_text

STRATEGIES = ("random", "confidence_informed")


class SamplingError(RedctError):
    """Invalid sampling request or expert-label application."""


def ceil_fraction(p: float, n: int) -> int:
    """ceil(p * n) guarded against float noise just above an integer."""
    return int(math.ceil(p * n - 1e-9))


@dataclass(frozen=True)
class SamplingManifest:
    """Record of which items went to experts, persisted so sessions resume."""

    strategy: str
    p: float
    selected_doc_ids: tuple[str, ...]
    per_class_counts: Mapping[int, int]
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "selected_doc_ids", tuple(self.selected_doc_ids))
        object.__setattr__(self, "per_class_counts", dict(self.per_class_counts))
        if self.strategy not in STRATEGIES:
            raise SamplingError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if len(set(self.selected_doc_ids)) != len(self.selected_doc_ids):
            raise SamplingError("selected_doc_ids contains duplicates")
        if sum(self.per_class_counts.values()) != len(self.selected_doc_ids):
            raise SamplingError("per_class_counts does not sum to the selection size")

    def to_json(self) -> str:
        payload = {
            "kind": "redct-sampling-manifest",
            "strategy": self.strategy,
            "p": self.p,
            "seed": self.seed,
            "selected_doc_ids": list(self.selected_doc_ids),
            "per_class_counts": {str(c): n for c, n in sorted(self.per_class_counts.items())},
        }
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def save(self, path: Path | str) -> None:
        atomic_write_text(path, self.to_json())

    @classmethod
    def load(cls, path: Path | str) -> "SamplingManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("kind") != "redct-sampling-manifest":
            raise SamplingError(f"{path} is not a sampling manifest")
        return cls(
            strategy=data["strategy"],
            p=float(data["p"]),
            selected_doc_ids=tuple(data["selected_doc_ids"]),
            per_class_counts={int(c): int(n) for c, n in data["per_class_counts"].items()},
            seed=data.get("seed"),
        )


def _require_annotated(ds: Dataset) -> None:
    missing = [d.doc_id for d in ds.documents if d.doc_id not in ds.annotations]
    if missing:
        raise SamplingError(
            f"dataset is not fully annotated: {len(missing)} document(s) missing, "
            f"e.g. {missing[:5]}"
        )
    if not ds.documents:
        raise SamplingError("cannot sample from an empty dataset")


def _check_fraction(p: float) -> None:
    if not 0.0 < p <= 1.0:
        raise SamplingError(f"sampling fraction must be in (0, 1], got {p}")


def _class_counts(ds: Dataset, selected: list[int]) -> dict[int, int]:
    counts: dict[int, int] = {}
    for idx in selected:
        cls = ds.annotations[ds.documents[idx].doc_id].predicted_class
        counts[cls] = counts.get(cls, 0) + 1
    return counts


def sample_random(ds: Dataset, p: float, seed: int) -> SamplingManifest:
    """Uniform sample of ceil(p * N) items, without replacement."""
    import numpy as np

    _check_fraction(p)
    _require_annotated(ds)
    n = len(ds.documents)
    count = ceil_fraction(p, n)
    rng = np.random.default_rng(seed)
    chosen = sorted(int(i) for i in rng.choice(n, size=count, replace=False))
    return SamplingManifest(
        strategy="random",
        p=p,
        selected_doc_ids=tuple(ds.documents[i].doc_id for i in chosen),
        per_class_counts=_class_counts(ds, chosen),
        seed=seed,
    )


def sample_confidence_informed(ds: Dataset, p: float) -> SamplingManifest:
    """Per predicted class, the ceil(p * n_c) lowest-confidence items.

    Confidence ties break by dataset order (earlier document first). Pure
    function of (annotations, p, dataset order): no seed involved. Every
    nonempty predicted class contributes at least one item.
    """
    _check_fraction(p)
    _require_annotated(ds)
    by_class: dict[int, list[tuple[float, int]]] = {}
    for idx, doc in enumerate(ds.documents):
        ann = ds.annotations[doc.doc_id]
        by_class.setdefault(ann.predicted_class, []).append((ann.confidence, idx))
    selected: list[int] = []
    for cls in sorted(by_class):
        members = sorted(by_class[cls])  # (confidence, dataset index) ascending
        take = ceil_fraction(p, len(members))
        selected.extend(idx for _, idx in members[:take])
    selected.sort()
    return SamplingManifest(
        strategy="confidence_informed",
        p=p,
        selected_doc_ids=tuple(ds.documents[i].doc_id for i in selected),
        per_class_counts=_class_counts(ds, selected),
    )


def apply_expert_labels(
    ds: Dataset, manifest: SamplingManifest, labels: Mapping[str, int]
) -> Dataset:
    """Merge expert labels for selected items into a new dataset.

    Partial application is allowed: items selected but not yet labeled
    stay pending, which is what lets a live annotation session stream
    labels in. Labels for unselected documents are rejected.
    """
    selected = set(manifest.selected_doc_ids)
    k = ds.schema.num_classes
    for doc_id, label in labels.items():
        if doc_id not in selected:
            raise SamplingError(f"expert label for unselected doc_id {doc_id!r}")
        if not 0 <= label < k:
            raise SamplingError(f"expert label {label} for {doc_id!r} out of range [0, {k})")
    return ds.with_expert_labels(dict(labels))


def pending_doc_ids(ds: Dataset, manifest: SamplingManifest) -> tuple[str, ...]:
    """Selected items that still lack an expert label, in manifest order."""
    return tuple(d for d in manifest.selected_doc_ids if d not in ds.expert_labels)

"""Fusing LLM annotations and expert labels into training targets.

An LLM annotation becomes a soft label: the logistic sigmoid of the
predicted token's probability goes on the predicted class and the
remainder is spread uniformly over the others. Since the token probability
lives in [0, 1], the predicted-class weight lives in [sigmoid(0), sigmoid(1)]
= [0.5, ~0.7311]: soft labels always keep the predicted class on top but
never let a shaky prediction dominate the target. Expert labels are one-hot
(weight 1 on the chosen class) and win over LLM annotations for the same
document.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .core import Dataset, LlmAnnotation, RedctError, SoftLabel, atomic_write_text

FUSED_KIND = "redct-fused-examples"

# Nudge applied to a K=2 exact tie so the predicted class stays the argmax;
# far below anything the training loss can feel.
_TIE_EPS = 1e-9

EXPERT_CONFIDENCE = 1.0  # sentinel confidence carried by expert examples


class FusionError(RedctError):
    """Document cannot be turned into a training target."""


@dataclass(frozen=True)
class FusedExample:
    """One training target: a soft label plus provenance."""

    doc_id: str
    target: SoftLabel
    source: str
    confidence: float


def expit(x: float) -> float:
    """Logistic sigmoid 1 / (1 + e^-x)."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def soft_label_from_annotation(ann: LlmAnnotation, num_classes: int) -> SoftLabel:
    """Soft target from an LLM annotation.

    w = sigmoid(p*) with p* the predicted token's probability (clamped to
    [0, 1] to guard backends emitting log-probs above 0); w goes on the
    predicted class, (1 - w) / (K - 1) on each other class.
    """
    if num_classes < 2:
        raise FusionError(f"need at least 2 classes, got {num_classes}")
    if len(ann.logprobs) != num_classes:
        raise FusionError(
            f"annotation for {ann.doc_id!r} has {len(ann.logprobs)} log-probs, "
            f"expected {num_classes}"
        )
    p_star = math.exp(ann.logprobs.per_class_logprob[ann.predicted_class])
    p_star = min(max(p_star, 0.0), 1.0)
    w = expit(p_star)
    rest = (1.0 - w) / (num_classes - 1)
    probs = [rest] * num_classes
    probs[ann.predicted_class] = w
    if num_classes == 2 and w == 0.5:
        probs[ann.predicted_class] += _TIE_EPS
        probs[1 - ann.predicted_class] -= _TIE_EPS
    return SoftLabel(tuple(probs), source="llm")


def soft_label_from_expert(class_index: int, num_classes: int) -> SoftLabel:
    """One-hot target: weight 1 on the selected class, 0 elsewhere."""
    if not 0 <= class_index < num_classes:
        raise FusionError(f"class index {class_index} out of range [0, {num_classes})")
    probs = [0.0] * num_classes
    probs[class_index] = 1.0
    return SoftLabel(tuple(probs), source="expert")


def hard_label_from_annotation(ann: LlmAnnotation, num_classes: int) -> SoftLabel:
    """One-hot on the LLM's predicted class (training without soft labels)."""
    if not 0 <= ann.predicted_class < num_classes:
        raise FusionError(
            f"annotation for {ann.doc_id!r} predicts class {ann.predicted_class}, "
            f"out of range [0, {num_classes})"
        )
    probs = [0.0] * num_classes
    probs[ann.predicted_class] = 1.0
    return SoftLabel(tuple(probs), source="llm")


def fuse(ds: Dataset, soft_llm_targets: bool = True) -> list[FusedExample]:
    """One training target per document, in dataset order.

    Expert labels win when both exist. With `soft_llm_targets` off, LLM
    annotations contribute plain one-hot targets on the predicted class
    (the no-soft-label training settings).
    """
    k = ds.schema.num_classes
    fused: list[FusedExample] = []
    for doc in ds.documents:
        if doc.doc_id in ds.expert_labels:
            target = soft_label_from_expert(ds.expert_labels[doc.doc_id], k)
            fused.append(FusedExample(doc.doc_id, target, "expert", EXPERT_CONFIDENCE))
            continue
        ann = ds.annotations.get(doc.doc_id)
        if ann is None:
            raise FusionError(f"document {doc.doc_id!r} has neither annotation nor expert label")
        if soft_llm_targets:
            target = soft_label_from_annotation(ann, k)
        else:
            target = hard_label_from_annotation(ann, k)
        fused.append(FusedExample(doc.doc_id, target, "llm", ann.confidence))
    return fused


def save_fused(examples: Iterable[FusedExample], path: Path | str) -> None:
    """Persist fused examples as JSONL (the training-set interchange file)."""
    examples = list(examples)
    lines = [
        json.dumps(
            {"kind": FUSED_KIND, "version": 1, "count": len(examples)},
            sort_keys=True, ensure_ascii=False,
        )
    ]
    for ex in examples:
        lines.append(
            json.dumps(
                {
                    "doc_id": ex.doc_id,
                    "probs": list(ex.target.probs),
                    "source": ex.source,
                    "confidence": ex.confidence,
                },
                sort_keys=True, ensure_ascii=False,
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_fused(path: Path | str) -> list[FusedExample]:
    path = Path(path)
    examples: list[FusedExample] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec.get("kind") == FUSED_KIND:
                continue
            try:
                examples.append(
                    FusedExample(
                        doc_id=rec["doc_id"],
                        target=SoftLabel(tuple(rec["probs"]), source=rec["source"]),
                        source=rec["source"],
                        confidence=float(rec["confidence"]),
                    )
                )
            except (KeyError, RedctError) as exc:
                raise FusionError(f"{path}:{line_no}: bad fused example: {exc}") from None
    return examples

"""Shared fixtures: schemas, hand-built datasets, and synthetic corpora."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import pytest

from redct import (
    Dataset,
    Document,
    LabelTokenLogProbs,
    LlmAnnotation,
    TaskSchema,
)


def stance_schema(prompt_style: str = "zero_shot") -> TaskSchema:
    return TaskSchema(
        task_id="stance",
        class_names=("For", "Against", "Neutral"),
        label_tokens={"For": "For", "Against": "Against", "Neutral": "Neutral"},
        prompt_style=prompt_style,
    )


@pytest.fixture(name="schema3")
def schema3_fixture() -> TaskSchema:
    return stance_schema()


@pytest.fixture(name="schema2")
def schema2_fixture() -> TaskSchema:
    return TaskSchema(
        task_id="misinformation",
        class_names=("misinformation", "trustworthy"),
        label_tokens={"misinformation": "Misinformation", "trustworthy": "Trustworthy"},
    )


def annotation_for(
    doc_id: str,
    num_classes: int,
    predicted: int,
    confidence: float,
    prompt_style: str = "zero_shot",
    abstained: bool = False,
) -> LlmAnnotation:
    """Annotation whose argmax is `predicted` and top-two gap is `confidence`.

    The predicted class gets log-prob -0.5, the runner-up -0.5 - confidence,
    and remaining classes trail strictly below. With confidence == 0 the
    runner-up index is chosen above `predicted` so the argmax convention
    (lowest index wins) still matches the requested class.
    """
    values = [-0.5 - confidence - 1.0 - 0.25 * i for i in range(num_classes)]
    values[predicted] = -0.5
    if confidence == 0:
        if predicted + 1 >= num_classes:
            raise ValueError("a tie annotation must predict a non-final class index")
        runner_up = predicted + 1
    else:
        runner_up = 0 if predicted != 0 else 1
    values[runner_up] = -0.5 - confidence
    return LlmAnnotation(
        doc_id=doc_id,
        predicted_class=predicted,
        logprobs=LabelTokenLogProbs(tuple(values)),
        confidence=float(confidence),
        prompt_style=prompt_style,
        abstained=abstained,
    )


def dataset_from_rows(
    schema: TaskSchema,
    rows: Sequence[tuple[int, Optional[int], float]],
    doc_prefix: str = "d",
    target: Optional[str] = None,
) -> Dataset:
    """Dataset from (gold, predicted, confidence) rows; predicted None skips annotation."""
    documents = []
    annotations = {}
    for i, (gold, predicted, confidence) in enumerate(rows):
        doc_id = f"{doc_prefix}{i:03d}"
        documents.append(Document(doc_id, f"text {i}", target=target, gold_label=gold))
        if predicted is not None:
            annotations[doc_id] = annotation_for(
                doc_id, schema.num_classes, predicted, confidence, schema.prompt_style
            )
    return Dataset(schema, tuple(documents), annotations)


@pytest.fixture(name="tiny_annotated")
def tiny_annotated_fixture(schema3: TaskSchema) -> Dataset:
    """Nine annotated docs, three per predicted class, varied confidences."""
    rows = [
        (0, 0, 2.0),
        (1, 0, 0.2),
        (0, 0, 1.1),
        (1, 1, 3.0),
        (1, 1, 0.05),
        (2, 1, 0.9),
        (2, 2, 1.4),
        (0, 2, 0.01),
        (2, 2, 2.5),
    ]
    return dataset_from_rows(schema3, rows)


def uniform_logprobs(num_classes: int) -> tuple[float, ...]:
    return (-math.log(num_classes),) * num_classes

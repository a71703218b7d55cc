"""Calibrated stand-in for a real LLM labeler.

For each document the simulator picks the gold class with a configured
per-class probability (otherwise a uniformly random wrong class), then
draws the answer token's probability q from a Beta distribution whose
parameters differ between correct and incorrect picks. With the correct
Beta's mean above the wrong one's, correct labels carry visibly higher
confidence scores, which is what confidence-informed sampling exploits.

Randomness is keyed per document from (seed, doc_id), so results do not
depend on processing order or parallelism.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import Dataset, Document, LlmAnnotation, RedctError, TaskSchema
from .backends import BackendReply, ChatMessage, GeneratedToken, TokenAlternative
from .scoring import make_annotation

# Keep the chosen token strictly on top, and every probability strictly
# inside (0, 1) so log-probs stay finite.
_TOP_MARGIN = 1e-9
_ONE_MARGIN = 1e-12


@dataclass(frozen=True)
class SimulatorConfig:
    accuracy_per_class: tuple[float, ...]
    correct_conf_params: tuple[float, float] = (8.0, 2.0)
    wrong_conf_params: tuple[float, float] = (2.0, 2.0)
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "accuracy_per_class", tuple(float(a) for a in self.accuracy_per_class)
        )
        object.__setattr__(self, "correct_conf_params", tuple(self.correct_conf_params))
        object.__setattr__(self, "wrong_conf_params", tuple(self.wrong_conf_params))
        for a in self.accuracy_per_class:
            if not 0.0 <= a <= 1.0:
                raise RedctError(f"simulator accuracy must be in [0, 1], got {a}")
        for name, (alpha, beta) in (
            ("correct_conf_params", self.correct_conf_params),
            ("wrong_conf_params", self.wrong_conf_params),
        ):
            if alpha <= 0 or beta <= 0:
                raise RedctError(f"{name} must be positive, got ({alpha}, {beta})")


def _doc_rng(seed: int, doc_id: str) -> np.random.Generator:
    digest = hashlib.blake2b(doc_id.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(np.random.SeedSequence([seed, int.from_bytes(digest, "little")]))


class SimulatorBackend:
    """LabelingBackend that answers from gold labels plus calibrated noise."""

    def __init__(self, config: SimulatorConfig):
        self.config = config
        self.backend_id = f"simulator:{config.seed}"
        self.retries = 0

    def draw(self, doc: Document, schema: TaskSchema) -> tuple[int, np.ndarray]:
        """Simulated label and the full token probability vector."""
        k = schema.num_classes
        if doc.gold_label is None:
            raise RedctError(f"simulator requires gold_label on document {doc.doc_id!r}")
        if len(self.config.accuracy_per_class) != k:
            raise RedctError(
                f"accuracy_per_class has {len(self.config.accuracy_per_class)} entries, "
                f"task has {k} classes"
            )
        rng = _doc_rng(self.config.seed, doc.doc_id)
        correct = rng.random() < self.config.accuracy_per_class[doc.gold_label]
        if correct:
            label = doc.gold_label
        else:
            others = [c for c in range(k) if c != doc.gold_label]
            label = others[int(rng.integers(len(others)))]
        alpha, beta = (
            self.config.correct_conf_params if correct else self.config.wrong_conf_params
        )
        q = float(rng.beta(alpha, beta))
        # q is the top token's probability: force it strictly above the rest.
        q = min(max(q, 1.0 / k + _TOP_MARGIN), 1.0 - _ONE_MARGIN)
        probs = np.full(k, (1.0 - q) / (k - 1))
        probs[label] = q
        return label, probs

    def complete(
        self,
        messages: Sequence[ChatMessage],
        doc: Document,
        schema: TaskSchema,
        answer_turn: bool = True,
        refresh: bool = False,
    ) -> BackendReply:
        if not answer_turn:
            return BackendReply(text=f"Simulated rationale for {doc.doc_id}.")
        label, probs = self.draw(doc, schema)
        logprobs = [math.log(p) for p in probs]
        alternatives = tuple(
            TokenAlternative(schema.label_tokens[schema.class_names[c]], logprobs[c])
            for c in range(schema.num_classes)
        )
        answer = schema.label_tokens[schema.class_names[label]]
        token = GeneratedToken(token=answer, logprob=logprobs[label], top=alternatives)
        return BackendReply(text=answer, tokens=(token,))


def simulate_labels(ds: Dataset, config: SimulatorConfig) -> Dataset:
    """Annotate every document with simulated LLM labels.

    Deterministic given the config seed; requires gold labels on every
    document. No prompts are rendered (nothing consumes them).
    """
    missing = [d.doc_id for d in ds.documents if d.gold_label is None]
    if missing:
        raise RedctError(
            f"simulator requires gold labels; missing for {len(missing)} document(s), "
            f"e.g. {missing[:5]}"
        )
    backend = SimulatorBackend(config)
    annotations: dict[str, LlmAnnotation] = {}
    for doc in ds.documents:
        label, probs = backend.draw(doc, ds.schema)
        answer = ds.schema.label_tokens[ds.schema.class_names[label]]
        annotations[doc.doc_id] = make_annotation(
            doc.doc_id,
            tuple(math.log(p) for p in probs),
            ds.schema.prompt_style,
            raw_response=answer,
        )
    return ds.with_annotations(annotations)

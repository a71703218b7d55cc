"""Confidence scoring and label-token log-prob extraction.

The confidence score of an annotation is the absolute gap between the two
largest label-token log-probabilities. It is shift-invariant (adding a
constant to every entry cancels in the difference), permutation-invariant,
nonnegative, and zero exactly when the top two entries tie. Low-confidence
items are the ones routed to human experts.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Union

from ..core import (
    LabelTokenLogProbs,
    LlmAnnotation,
    RedctError,
    TaskSchema,
    label_matching_key,
)
from .backends import GeneratedToken, UnparseableResponse

# A class token absent from the response's top-k alternatives gets the
# smallest observed log-prob minus this: a finite, clearly dominated floor.
MISSING_TOKEN_PENALTY = math.log(100.0)


def confidence_score(lp: Union[LabelTokenLogProbs, Sequence[float]]) -> float:
    """Gap between the two largest entries: |max - second max|, >= 0."""
    vals = lp.per_class_logprob if isinstance(lp, LabelTokenLogProbs) else tuple(lp)
    if len(vals) < 2:
        raise RedctError(f"confidence score needs at least 2 entries, got {len(vals)}")
    top = second = -math.inf
    for v in vals:
        v = float(v)
        if not math.isfinite(v):
            raise RedctError(f"confidence score needs finite entries, got {v!r}")
        if v > top:
            second = top
            top = v
        elif v > second:
            second = v
    return abs(top - second)


def argmax_class(lp: Union[LabelTokenLogProbs, Sequence[float]]) -> int:
    """Index of the largest entry; ties go to the lowest index."""
    vals = lp.per_class_logprob if isinstance(lp, LabelTokenLogProbs) else lp
    best, best_val = 0, -math.inf
    for i, v in enumerate(vals):
        if v > best_val:
            best, best_val = i, v
    return best


def make_annotation(
    doc_id: str,
    logprobs: Union[LabelTokenLogProbs, Sequence[float]],
    prompt_style: str,
    raw_response: str = "",
    rationale: Optional[str] = None,
    abstained: bool = False,
) -> LlmAnnotation:
    """Build an annotation with its derived fields kept consistent."""
    if not isinstance(logprobs, LabelTokenLogProbs):
        logprobs = LabelTokenLogProbs(tuple(logprobs))
    return LlmAnnotation(
        doc_id=doc_id,
        predicted_class=argmax_class(logprobs),
        logprobs=logprobs,
        confidence=confidence_score(logprobs),
        prompt_style=prompt_style,
        raw_response=raw_response,
        rationale=rationale,
        abstained=abstained,
    )


def abstention_annotation(
    doc_id: str, num_classes: int, prompt_style: str, raw_response: str
) -> LlmAnnotation:
    """Uniform-log-prob fallback for responses that never parsed.

    Confidence is 0 by construction, so abstained items sort to the bottom
    percentile and get routed to experts.
    """
    uniform = (-math.log(num_classes),) * num_classes
    return make_annotation(
        doc_id, uniform, prompt_style, raw_response=raw_response, abstained=True
    )


def match_class(token_text: str, keys: Sequence[str]) -> Optional[int]:
    """Class index a generated token resolves to, or None.

    A token matches class c when c's matching key starts with the token's
    normalized form; an empty or ambiguous match resolves to nothing.
    """
    norm = label_matching_key(token_text)
    if not norm:
        return None
    hits = [i for i, key in enumerate(keys) if key.startswith(norm)]
    return hits[0] if len(hits) == 1 else None


def extract_class_logprobs(
    tokens: Sequence[GeneratedToken], schema: TaskSchema
) -> LabelTokenLogProbs:
    """Read per-class log-probs from a response's token stream.

    The answer position is the first generated token that resolves to a
    class. Each class's log-prob comes from the best-matching alternative
    at that position; classes absent from the top-k list get the dominated
    floor (min observed log-prob minus ln 100).
    """
    keys = schema.matching_keys()
    for tok in tokens:
        if match_class(tok.token, keys) is None:
            continue
        candidates = [(tok.token, tok.logprob)]
        candidates.extend((alt.token, alt.logprob) for alt in tok.top)
        observed = [lp for _, lp in candidates if math.isfinite(lp)]
        if not observed:
            break
        per_class: list[Optional[float]] = [None] * schema.num_classes
        for text, lp in candidates:
            if not math.isfinite(lp):
                continue
            cls = match_class(text, keys)
            if cls is not None and (per_class[cls] is None or lp > per_class[cls]):
                per_class[cls] = lp
        floor = min(observed) - MISSING_TOKEN_PENALTY
        return LabelTokenLogProbs(tuple(floor if v is None else v for v in per_class))
    raise UnparseableResponse(
        f"no generated token resolves to a label token for task {schema.task_id!r}"
    )

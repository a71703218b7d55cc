"""Document and corpus labeling drivers.

`label_document` runs the full conversation for one document (two turns
for CoT), extracts label-token log-probs from the answer turn, and retries
unparseable answers before falling back to an abstention record.
`label_corpus` fans that out over a worker pool and merges results by
doc_id, so completion order never affects the output.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from ..core import Dataset, Document, LlmAnnotation, RedctError, TaskSchema
from .backends import (
    BackendError,
    ChatMessage,
    LabelingBackend,
    UnparseableResponse,
)
from .prompts import PromptError, PromptTemplates, render_prompt
from .scoring import abstention_annotation, extract_class_logprobs, make_annotation

logger = logging.getLogger(__name__)

DEFAULT_PARSE_RETRIES = 3


def label_document(
    doc: Document,
    schema: TaskSchema,
    backend: LabelingBackend,
    templates: Optional[PromptTemplates] = None,
    parse_retries: int = DEFAULT_PARSE_RETRIES,
) -> LlmAnnotation:
    """Label one document; abstain if the answer never parses.

    Transport errors propagate (with attempt counts) after the backend's
    own retries; an answer with no resolvable label token is retried
    `parse_retries` times bypassing the cache, then recorded as an
    abstention with uniform log-probs and confidence 0.
    """
    turns = render_prompt(doc, schema, templates)
    raw_response = ""
    for attempt in range(parse_retries + 1):
        refresh = attempt > 0
        rationale = None
        messages = [ChatMessage("user", turns[0])]
        answer_turn = len(turns) == 1
        reply = backend.complete(doc=doc, schema=schema, messages=messages,
                                 answer_turn=answer_turn, refresh=refresh)
        if len(turns) == 2:
            rationale = reply.text
            messages = [
                ChatMessage("user", turns[0]),
                ChatMessage("assistant", reply.text),
                ChatMessage("user", turns[1]),
            ]
            reply = backend.complete(doc=doc, schema=schema, messages=messages,
                                     answer_turn=True, refresh=refresh)
        raw_response = reply.text
        if reply.usage_tokens:
            logger.debug("doc %s used %d tokens", doc.doc_id, reply.usage_tokens)
        try:
            logprobs = extract_class_logprobs(reply.tokens, schema)
        except UnparseableResponse:
            logger.debug(
                "doc %s: unparseable answer %r (attempt %d/%d)",
                doc.doc_id, reply.text[:80], attempt + 1, parse_retries + 1,
            )
            continue
        return make_annotation(
            doc.doc_id,
            logprobs,
            schema.prompt_style,
            raw_response=reply.text,
            rationale=rationale,
        )
    logger.warning("doc %s: abstaining after %d attempts", doc.doc_id, parse_retries + 1)
    return abstention_annotation(doc.doc_id, schema.num_classes, schema.prompt_style, raw_response)


def label_corpus(
    ds: Dataset,
    backend: LabelingBackend,
    parallelism: int = 1,
    templates: Optional[PromptTemplates] = None,
    parse_retries: int = DEFAULT_PARSE_RETRIES,
) -> Dataset:
    """Annotate every document, up to `parallelism` requests in flight.

    Prompts for the whole corpus are validated before any backend call.
    Documents whose backend keeps failing are flagged as abstentions and
    reported together at the end; the returned dataset always has one
    annotation per document.
    """
    if parallelism < 1:
        raise RedctError(f"parallelism must be >= 1, got {parallelism}")
    if not ds.documents:
        return ds.with_annotations({})
    templates = templates or PromptTemplates.for_schema(ds.schema)
    bad_prompts = []
    for doc in ds.documents:
        try:
            render_prompt(doc, ds.schema, templates)
        except PromptError as exc:
            bad_prompts.append(str(exc))
    if bad_prompts:
        raise PromptError(
            f"{len(bad_prompts)} document(s) cannot be rendered:\n" + "\n".join(bad_prompts[:10])
        )

    failures: dict[str, str] = {}

    def run_one(doc: Document) -> LlmAnnotation:
        try:
            return label_document(doc, ds.schema, backend, templates, parse_retries)
        except BackendError as exc:
            failures[doc.doc_id] = str(exc)
            return abstention_annotation(
                doc.doc_id, ds.schema.num_classes, ds.schema.prompt_style,
                raw_response=f"backend failure: {exc}",
            )

    annotations: dict[str, LlmAnnotation] = {}
    total = len(ds.documents)
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for i, ann in enumerate(pool.map(run_one, ds.documents), start=1):
            annotations[ann.doc_id] = ann
            if i % 250 == 0 or i == total:
                logger.info("labeled %d/%d documents", i, total)
    if failures:
        logger.warning(
            "backend failed for %d document(s), recorded as abstentions: %s",
            len(failures), sorted(failures),
        )
    return ds.with_annotations(annotations)

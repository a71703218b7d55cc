"""LLM labeling: prompts, backends, confidence scoring, and the simulator."""

from .backends import (
    BackendError,
    BackendReply,
    BackendTransportError,
    ChatMessage,
    GeneratedToken,
    HttpBackendConfig,
    HttpChatBackend,
    LabelingBackend,
    ResponseCache,
    TokenAlternative,
    UnparseableResponse,
)
from .labeling import label_corpus, label_document
from .prompts import PromptError, PromptTemplates, render_prompt
from .scoring import (
    abstention_annotation,
    argmax_class,
    confidence_score,
    extract_class_logprobs,
    make_annotation,
    match_class,
)
from .simulator import SimulatorBackend, SimulatorConfig, simulate_labels

__all__ = [
    "BackendError",
    "BackendReply",
    "BackendTransportError",
    "ChatMessage",
    "GeneratedToken",
    "HttpBackendConfig",
    "HttpChatBackend",
    "LabelingBackend",
    "PromptError",
    "PromptTemplates",
    "ResponseCache",
    "SimulatorBackend",
    "SimulatorConfig",
    "TokenAlternative",
    "UnparseableResponse",
    "abstention_annotation",
    "argmax_class",
    "confidence_score",
    "extract_class_logprobs",
    "label_corpus",
    "label_document",
    "make_annotation",
    "match_class",
    "render_prompt",
    "simulate_labels",
]

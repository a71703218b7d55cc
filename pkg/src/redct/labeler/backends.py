"""Labeling backends: the transport boundary between prompts and answers.

A backend turns a chat conversation into a :class:`BackendReply` carrying
the answer text and per-token top-k log-probs. The HTTP backend speaks the
chat-completions JSON shape at temperature 0 and caches every raw response
on disk keyed by prompt hash, so re-runs are free and reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Protocol, Sequence

import requests

from ..core import Document, RedctError, TaskSchema, atomic_write_text

logger = logging.getLogger(__name__)


class BackendError(RedctError):
    """Labeling backend failure."""


class BackendTransportError(BackendError):
    """Request never produced a usable HTTP response, retries included."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class UnparseableResponse(BackendError):
    """The response carried no resolvable label token."""


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "user" | "assistant" | "system"
    content: str


@dataclass(frozen=True)
class TokenAlternative:
    token: str
    logprob: float


@dataclass(frozen=True)
class GeneratedToken:
    token: str
    logprob: float
    top: tuple[TokenAlternative, ...] = ()


@dataclass(frozen=True)
class BackendReply:
    """One model turn: message text plus its token-level log-probs."""

    text: str
    tokens: tuple[GeneratedToken, ...] = ()
    usage_tokens: int = 0
    raw: Any = None


class LabelingBackend(Protocol):
    """Anything that can answer a labeling conversation.

    `answer_turn` is False only for the explanation turn of a CoT exchange;
    log-probs are read exclusively from answer turns.
    """

    backend_id: str

    def complete(
        self,
        messages: Sequence[ChatMessage],
        doc: Document,
        schema: TaskSchema,
        answer_turn: bool = True,
        refresh: bool = False,
    ) -> BackendReply: ...


# -- response cache --


def _cache_key(backend_id: str, messages: Sequence[ChatMessage]) -> str:
    payload = json.dumps(
        {
            "backend_id": backend_id,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _reply_to_record(reply: BackendReply) -> dict[str, Any]:
    return {
        "text": reply.text,
        "tokens": [
            {
                "token": t.token,
                "logprob": t.logprob,
                "top": [{"token": a.token, "logprob": a.logprob} for a in t.top],
            }
            for t in reply.tokens
        ],
        "usage_tokens": reply.usage_tokens,
        "raw_response": reply.raw,
    }


def _reply_from_record(rec: dict[str, Any]) -> BackendReply:
    tokens = tuple(
        GeneratedToken(
            token=t["token"],
            logprob=float(t["logprob"]),
            top=tuple(TokenAlternative(a["token"], float(a["logprob"])) for a in t["top"]),
        )
        for t in rec["tokens"]
    )
    return BackendReply(
        text=rec["text"],
        tokens=tokens,
        usage_tokens=int(rec.get("usage_tokens", 0)),
        raw=rec.get("raw_response"),
    )


class ResponseCache:
    """One JSON file per prompt hash: raw response plus extracted log-probs."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> Optional[BackendReply]:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            rec = json.loads(path.read_text(encoding="utf-8"))
            return _reply_from_record(rec["reply"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            logger.warning("discarding unreadable cache entry %s", path)
            return None

    def put(self, key: str, backend_id: str, reply: BackendReply) -> None:
        record = {"backend_id": backend_id, "prompt_hash": key, "reply": _reply_to_record(reply)}
        atomic_write_text(self._path(key), json.dumps(record, ensure_ascii=False, sort_keys=True))


# -- HTTP chat-completions backend --


@dataclass
class HttpBackendConfig:
    base_url: str
    model: str
    auth_env: Optional[str] = None  # env var holding the bearer token
    top_logprobs: int = 5
    max_tokens: int = 256
    timeout: float = 60.0
    retries: int = 3
    backoff_base: float = 0.5
    cache_dir: Optional[str] = None
    extra_headers: dict[str, str] = field(default_factory=dict)


class HttpChatBackend:
    """Chat-completions endpoint client with retries and a disk cache.

    Requests run at temperature 0 and ask for top-k token log-probs. The
    auth token is read from the environment variable named in the config;
    it never appears in config files.
    """

    def __init__(self, config: HttpBackendConfig, session: Optional[requests.Session] = None):
        self.config = config
        self.backend_id = f"http:{config.base_url}:{config.model}"
        self.retries = config.retries
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env:
            token = os.environ.get(self.config.auth_env)
            if not token:
                raise BackendError(
                    f"auth environment variable {self.config.auth_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        headers.update(self.config.extra_headers)
        return headers

    def complete(
        self,
        messages: Sequence[ChatMessage],
        doc: Document,
        schema: TaskSchema,
        answer_turn: bool = True,
        refresh: bool = False,
    ) -> BackendReply:
        key = _cache_key(self.backend_id, messages)
        if self.cache and not refresh:
            cached = self.cache.get(key)
            if cached is not None:
                logger.debug("cache hit for doc %s", doc.doc_id)
                return cached
        reply = self._request(messages)
        if self.cache:
            self.cache.put(key, self.backend_id, reply)
        return reply

    def _request(self, messages: Sequence[ChatMessage]) -> BackendReply:
        body = {
            "model": self.config.model,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
            "logprobs": True,
            "top_logprobs": self.config.top_logprobs,
        }
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        attempts = self.config.retries + 1
        last_error: Optional[str] = None
        for attempt in range(attempts):
            if attempt:
                delay = self.config.backoff_base * (2 ** (attempt - 1))
                logger.info("retrying request in %.2fs (attempt %d)", delay, attempt + 1)
                time.sleep(delay)
            try:
                resp = self._session.post(
                    url, json=body, headers=self._headers(), timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = f"server returned {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise BackendError(f"server returned {resp.status_code}: {resp.text[:200]}")
            try:
                return _parse_chat_response(resp.json())
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise BackendError(f"malformed chat-completions response: {exc}") from exc
        raise BackendTransportError(last_error or "request failed", attempts)


def _parse_chat_response(data: dict[str, Any]) -> BackendReply:
    choice = data["choices"][0]
    text = choice["message"].get("content") or ""
    tokens: list[GeneratedToken] = []
    logprobs = choice.get("logprobs") or {}
    for item in logprobs.get("content") or []:
        top = tuple(
            TokenAlternative(alt["token"], float(alt["logprob"]))
            for alt in item.get("top_logprobs") or []
        )
        tokens.append(GeneratedToken(item["token"], float(item["logprob"]), top))
    usage = (data.get("usage") or {}).get("total_tokens", 0)
    return BackendReply(text=text, tokens=tuple(tokens), usage_tokens=int(usage), raw=data)

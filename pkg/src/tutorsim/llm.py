"""Chat-completion backends: an OpenAI-compatible HTTP client and a scripted mock."""

from __future__ import annotations

import itertools
import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from .errors import BackendExhausted, MalformedResponse, TransportError
from .prompts import ChatMessage

log = logging.getLogger(__name__)

API_KEY_ENV = "TUTORSIM_API_KEY"
ENDPOINT_ENV = "TUTORSIM_ENDPOINT"

ROLEPLAY_TEMPERATURE = 0.7
JUDGE_TEMPERATURE = 0.0


@dataclass(frozen=True)
class GenerationParams:
    model_name: str = "gpt-4-1106-preview"
    temperature: float = ROLEPLAY_TEMPERATURE
    max_tokens: int = 512
    request_timeout: float = 60.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class AuditLog:
    """Append-only JSONL trail of every backend exchange.

    Call indices increase monotonically across all threads sharing the log,
    and continue from the existing line count when reopening a file.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        start = 0
        if self.path is not None and self.path.exists():
            with self.path.open("rb") as fh:
                start = sum(1 for _ in fh)
        self._counter = itertools.count(start)
        self._lock = threading.Lock()
        self.entries: list[dict] = [] if self.path is None else None  # in-memory when no path

    def record(self, event: str, **fields) -> int:
        with self._lock:
            index = next(self._counter)
            entry = {"call_index": index, "event": event, **fields}
            if self.path is None:
                self.entries.append(entry)
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
            return index


class Backend(Protocol):
    name: str

    def complete(self, messages: Sequence[ChatMessage], params: GenerationParams) -> str: ...


class ScriptedBackend:
    """Returns queued responses in FIFO order. Single consumer."""

    def __init__(self, responses: Iterable[str], name: str = "scripted", audit: AuditLog | None = None):
        self.queue: deque[str] = deque(responses)
        self.name = name
        self.audit = audit
        self.calls = 0

    def __len__(self) -> int:
        return len(self.queue)

    def complete(self, messages, params) -> str:
        if not self.queue:
            if self.audit:
                self.audit.record("error", backend=self.name, request=_body(messages, params), error="exhausted")
            raise BackendExhausted(f"{self.name}: scripted response queue is empty")
        text = self.queue.popleft()
        self.calls += 1
        if self.audit:
            self.audit.record("chat", backend=self.name, request=_body(messages, params), response=text)
        return text


class HttpChatBackend:
    """OpenAI-compatible ``/chat/completions`` client with retry and backoff.

    Transport failures, 408/409/429 and 5xx responses are retried up to
    ``max_retries`` times; retry ``n`` sleeps ``backoff_base * 2**(n - 1)``
    plus up to ``jitter`` seconds.
    """

    RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}

    def __init__(
        self,
        endpoint: str | None = None,
        *,
        api_key: str | None = None,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        jitter: float = 0.25,
        name: str = "http",
        audit: AuditLog | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise ValueError(f"no endpoint given and {ENDPOINT_ENV} is unset")
        if max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.jitter = jitter
        self.name = name
        self.audit = audit
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._client = httpx.Client(transport=transport)

    @property
    def url(self) -> str:
        return f"{self.endpoint}/chat/completions"

    def close(self) -> None:
        self._client.close()

    def complete(self, messages, params) -> str:
        body = _body(messages, params)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_base * 2 ** (attempt - 1) + self._rng.uniform(0, self.jitter)
                log.warning("%s: retry %d/%d in %.2fs (%s)", self.name, attempt, self.max_retries, delay, last_error)
                self._sleep(delay)
            try:
                resp = self._client.post(self.url, json=body, headers=headers, timeout=params.request_timeout)
            except httpx.TransportError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                self._audit_error(body, last_error, attempt)
                continue
            if resp.status_code in self.RETRY_STATUS:
                last_error = f"HTTP {resp.status_code}"
                self._audit_error(body, last_error, attempt)
                continue
            if resp.status_code >= 400:
                self._audit_error(body, f"HTTP {resp.status_code}", attempt)
                raise TransportError(f"{self.name}: HTTP {resp.status_code}: {resp.text[:200]}")
            text = _extract_content(resp)
            if self.audit:
                self.audit.record("chat", backend=self.name, request=body, response=text, attempt=attempt)
            return text
        raise TransportError(f"{self.name}: giving up after {self.max_retries} retries ({last_error})")

    def _audit_error(self, body, error, attempt) -> None:
        if self.audit:
            self.audit.record("error", backend=self.name, request=body, error=error, attempt=attempt)


class RateLimitedBackend:
    """Caps the number of in-flight calls to a shared backend."""

    def __init__(self, inner: Backend, max_concurrent: int = 4):
        if max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        self.inner = inner
        self.name = inner.name
        self._slots = threading.BoundedSemaphore(max_concurrent)

    def complete(self, messages, params) -> str:
        with self._slots:
            return self.inner.complete(messages, params)


def chat(backend: Backend, messages: Sequence[ChatMessage], params: GenerationParams) -> ChatMessage:
    """Send ``messages`` and return the single assistant reply."""
    if not messages:
        raise ValueError("messages must be non-empty")
    if messages[0].role not in ("system", "user"):
        raise ValueError("first message must have role system or user")
    text = backend.complete(messages, params)
    if not isinstance(text, str) or not text.strip():
        raise MalformedResponse(f"{backend.name}: empty assistant content")
    return ChatMessage("assistant", text.strip())


def _body(messages, params: GenerationParams) -> dict:
    return {
        "model": params.model_name,
        "messages": [m.to_dict() for m in messages],
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
    }


def _extract_content(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"response lacks choices[0].message.content: {resp.text[:200]}") from exc
    if not isinstance(content, str) or not content.strip():
        raise MalformedResponse("assistant content is empty")
    return content

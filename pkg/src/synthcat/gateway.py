"""Provider-neutral chat-completion gateway.

One system + one user message in, text out.  The gateway owns retries with
exponential backoff, bounded parallelism, and a per-request-tag token
ledger; providers only perform the call.  ``synthcat.mock_provider`` ships
a fully deterministic offline provider, ``RemoteProvider`` speaks a plain
chat-completion wire format over HTTP.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Protocol

import requests

logger = logging.getLogger(__name__)

DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_BASE = 0.5  # seconds
DEFAULT_BACKOFF_FACTOR = 2.0
DEFAULT_BACKOFF_JITTER = 0.2  # +/- fraction
DEFAULT_BACKOFF_CEILING = 10.0  # total sleep budget per call, seconds
DEFAULT_MAX_PARALLEL = 4
DEFAULT_TIMEOUT = 30.0

API_KEY_ENV = "LLM_API_KEY"


class TransportError(Exception):
    """A provider call failed; ``retryable`` steers the gateway's retry loop."""

    def __init__(self, message: str, retryable: bool = True, status_code: int | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.status_code = status_code


class AuthError(TransportError):
    """Authentication/authorization failure; never retried."""

    def __init__(self, message: str, status_code: int | None = None):
        super().__init__(message, retryable=False, status_code=status_code)


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
        )


@dataclass(frozen=True)
class ChatRequest:
    system_text: str
    user_text: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    request_tag: str = "default"

    def __post_init__(self):
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not (0.0 <= self.temperature <= 2.0):
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: TokenUsage
    provider_id: str
    latency: float  # seconds


class Provider(Protocol):
    provider_id: str

    def complete(self, req: ChatRequest) -> tuple[str, TokenUsage]: ...


@dataclass
class TagTotals:
    calls: int = 0
    retries: int = 0
    input_tokens: int = 0
    output_tokens: int = 0


class UsageLedger:
    """Run-level token accounting keyed by request tag.  Thread-safe."""

    def __init__(self):
        self._lock = threading.Lock()
        self._by_tag: dict[str, TagTotals] = {}

    def record(self, tag: str, usage: TokenUsage, retries: int = 0) -> None:
        with self._lock:
            totals = self._by_tag.setdefault(tag, TagTotals())
            totals.calls += 1
            totals.retries += retries
            totals.input_tokens += usage.input_tokens
            totals.output_tokens += usage.output_tokens

    def snapshot(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {
                tag: {
                    "calls": t.calls,
                    "retries": t.retries,
                    "input_tokens": t.input_tokens,
                    "output_tokens": t.output_tokens,
                }
                for tag, t in sorted(self._by_tag.items())
            }

    def total(self) -> TokenUsage:
        with self._lock:
            return TokenUsage(
                sum(t.input_tokens for t in self._by_tag.values()),
                sum(t.output_tokens for t in self._by_tag.values()),
            )


@dataclass
class RetryPolicy:
    retries: int = DEFAULT_RETRIES
    backoff_base: float = DEFAULT_BACKOFF_BASE
    backoff_factor: float = DEFAULT_BACKOFF_FACTOR
    jitter: float = DEFAULT_BACKOFF_JITTER
    ceiling: float = DEFAULT_BACKOFF_CEILING


class LLMGateway:
    """Retrying, accounting front-end over a provider.

    ``sleep_fn`` and ``jitter_rng`` are injectable so tests never sleep.
    Parallel callers are capped by a semaphore sized ``max_parallel``.
    """

    def __init__(
        self,
        provider: Provider,
        retry: RetryPolicy | None = None,
        max_parallel: int = DEFAULT_MAX_PARALLEL,
        ledger: UsageLedger | None = None,
        sleep_fn: Callable[[float], None] = time.sleep,
        jitter_rng: Random | None = None,
    ):
        self.provider = provider
        self.retry = retry or RetryPolicy()
        self.ledger = ledger or UsageLedger()
        self._semaphore = threading.Semaphore(max_parallel)
        self._sleep = sleep_fn
        self._jitter_rng = jitter_rng or Random(0)

    def _backoff(self, attempt: int, slept: float) -> float:
        wait = self.retry.backoff_base * (self.retry.backoff_factor**attempt)
        spread = self.retry.jitter
        wait *= 1.0 + self._jitter_rng.uniform(-spread, spread)
        return max(0.0, min(wait, self.retry.ceiling - slept))

    def complete(self, req: ChatRequest) -> ChatResponse:
        attempt = 0
        slept = 0.0
        start = time.monotonic()
        while True:
            try:
                with self._semaphore:
                    text, usage = self.provider.complete(req)
                break
            except TransportError as exc:
                if not exc.retryable or attempt >= self.retry.retries:
                    logger.error(
                        "request tag=%s failed after %d attempt(s): %s",
                        req.request_tag,
                        attempt + 1,
                        exc,
                    )
                    raise
                wait = self._backoff(attempt, slept)
                logger.warning(
                    "request tag=%s attempt %d failed (%s); retrying in %.2fs",
                    req.request_tag,
                    attempt + 1,
                    exc,
                    wait,
                )
                self._sleep(wait)
                slept += wait
                attempt += 1
        latency = time.monotonic() - start
        self.ledger.record(req.request_tag, usage, retries=attempt)
        return ChatResponse(
            text=text,
            usage=usage,
            provider_id=self.provider.provider_id,
            latency=latency,
        )


class RemoteProvider:
    """Minimal chat-completion HTTP client.

    Expects an endpoint accepting ``{model, messages, temperature,
    max_tokens}`` and returning ``choices[0].message.content`` plus a
    ``usage`` block — the de-facto wire shape shared by hosted providers.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.provider_id = f"remote:{model}"
        self._session = session or requests.Session()

    def complete(self, req: ChatRequest) -> tuple[str, TokenUsage]:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": req.user_text},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._session.post(
                self.endpoint, json=body, headers=headers, timeout=self.timeout
            )
        except requests.Timeout as exc:
            raise TransportError(f"request timed out: {exc}", retryable=True) from exc
        except requests.RequestException as exc:
            raise TransportError(f"connection failed: {exc}", retryable=True) from exc

        if resp.status_code in (401, 403):
            raise AuthError(f"authentication failed ({resp.status_code})", resp.status_code)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(
                f"provider returned {resp.status_code}", retryable=True,
                status_code=resp.status_code,
            )
        if resp.status_code >= 400:
            raise TransportError(
                f"provider rejected request ({resp.status_code}): {resp.text[:200]}",
                retryable=False,
                status_code=resp.status_code,
            )

        data = resp.json()
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed provider response: {exc}", retryable=False) from exc
        usage_raw = data.get("usage", {}) or {}
        usage = TokenUsage(
            int(usage_raw.get("prompt_tokens", 0)),
            int(usage_raw.get("completion_tokens", 0)),
        )
        return text, usage


def whitespace_token_count(text: str) -> int:
    return len(text.split())

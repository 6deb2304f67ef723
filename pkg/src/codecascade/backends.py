"""Chat-completion backends behind one interface.

A backend turns a message list into the next assistant message. Real
services are reached over a chat-completion HTTP protocol; scripted
backends replay canned responses deterministically for tests and
simulation. Pricing and token accounting live here too.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .core import Role, TokenUsage

logger = logging.getLogger(__name__)

MICRO = Decimal("1e-6")


class BackendError(Exception):
    """Transport/auth/malformed-response failure after retries."""


class ContextOverflowError(Exception):
    """The prompt does not fit the model's context window."""


@dataclass(frozen=True)
class ModelProfile:
    """Pricing and capacity of one backend; rank 0 is the cheapest tier."""

    name: str
    price_in: Decimal  # currency per 1,000,000 prompt tokens
    price_out: Decimal  # currency per 1,000,000 completion tokens
    context_window: int
    rank: int = 0

    def __post_init__(self) -> None:
        if self.price_in < 0 or self.price_out < 0:
            raise ValueError("prices must be >= 0")
        if self.context_window <= 0:
            raise ValueError("context_window must be > 0")
        if self.rank < 0:
            raise ValueError("rank must be nonnegative")


@dataclass(frozen=True)
class ChatExchange:
    request_messages: tuple[tuple[str, str], ...]  # (role, content)
    response_text: str
    usage: TokenUsage
    wall_time: float


def estimate_tokens(text: str) -> int:
    """Deterministic token estimate: ceil(utf-8 byte length / 4)."""
    n = len(text.encode("utf-8"))
    return -(-n // 4)


def cost_of(exchange_usage: TokenUsage, profile: ModelProfile) -> Decimal:
    """Exact decimal dollar cost of one exchange; no float rounding."""
    return (
        Decimal(exchange_usage.prompt_tokens) * profile.price_in
        + Decimal(exchange_usage.completion_tokens) * profile.price_out
    ) * MICRO


def _prompt_token_estimate(
    messages: Sequence[tuple[str, str]], system_prompt: str
) -> int:
    total = estimate_tokens(system_prompt) if system_prompt else 0
    return total + sum(estimate_tokens(content) for _, content in messages)


class ChatBackend(Protocol):
    """Produces the next assistant message for a message list.

    Returns (response_text, reported_usage_or_None). Implementations raise
    BackendError for transport-level failures and ContextOverflowError
    when they detect an over-long prompt themselves.
    """

    def reply(
        self, messages: Sequence[tuple[str, str]], system_prompt: str
    ) -> tuple[str, TokenUsage | None]: ...


def complete(
    profile: ModelProfile,
    backend: ChatBackend,
    messages: Sequence[tuple[str, str]],
    system_prompt: str = "",
) -> ChatExchange:
    """One chat completion with usage accounting.

    Enforces the context window up front (estimated prompt tokens must be
    strictly below it). When the backend reports no usage, both sides are
    estimated with the byte estimator.
    """
    prompt_tokens = _prompt_token_estimate(messages, system_prompt)
    if prompt_tokens >= profile.context_window:
        raise ContextOverflowError(
            f"estimated {prompt_tokens} prompt tokens >= context window "
            f"{profile.context_window} of {profile.name}"
        )
    start = time.monotonic()
    text, usage = backend.reply(messages, system_prompt)
    wall = time.monotonic() - start
    if usage is None:
        usage = TokenUsage(prompt_tokens, estimate_tokens(text))
    request = tuple((role, content) for role, content in messages)
    return ChatExchange(request, text, usage, wall)


class ScriptedBackend:
    """Replays a fixed script of responses verbatim and in order.

    Once the script is exhausted the final entry repeats, so a short
    script can stand in for an assistant that never changes its mind.
    Script consumption is serialized for concurrent callers.
    """

    def __init__(self, script: Sequence[str]):
        if not script:
            raise ValueError("script must be nonempty")
        self._script = list(script)
        self._pos = 0
        self._lock = threading.Lock()

    def reply(
        self, messages: Sequence[tuple[str, str]], system_prompt: str
    ) -> tuple[str, TokenUsage | None]:
        with self._lock:
            text = self._script[min(self._pos, len(self._script) - 1)]
            self._pos += 1
        return text, None

    def reset(self) -> None:
        with self._lock:
            self._pos = 0


class RuleBackend:
    """Responds by matching substrings of the latest prompt message.

    Rules are (match, respond) pairs scanned in order; a rule with no
    match pattern always fires. Falls back to the default response.
    """

    def __init__(
        self, rules: Sequence[tuple[str | None, str]], default: str
    ):
        self._rules = list(rules)
        self._default = default

    def reply(
        self, messages: Sequence[tuple[str, str]], system_prompt: str
    ) -> tuple[str, TokenUsage | None]:
        latest = messages[-1][1] if messages else ""
        for match, respond in self._rules:
            if match is None or match in latest:
                return respond, None
        return self._default, None


def load_scripted_backend(path: str | Path) -> ChatBackend:
    """Load a scripted backend from its JSON file format.

    Either {"script": [...]} for ordered replay or
    {"rules": [{"match": ..., "respond": ...}, ...], "default": ...}.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "script" in data:
        return ScriptedBackend(data["script"])
    rules = [(r.get("match"), r["respond"]) for r in data.get("rules", [])]
    return RuleBackend(rules, data.get("default", ""))


class HttpChatBackend:
    """Client for a chat-completion HTTP service.

    Request: {"model": ..., "messages": [{"role", "content"}, ...]} with the
    system prompt as a leading system message. Response: the first choice's
    message content plus usage counts. Transient transport failures are
    retried with exponential backoff; HTTP errors are not (auth problems are
    not transient).
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        retries: int = 3,
        backoff_base: float = 1.0,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.retries = retries
        self.backoff_base = backoff_base

    def reply(
        self, messages: Sequence[tuple[str, str]], system_prompt: str
    ) -> tuple[str, TokenUsage | None]:
        payload_messages = []
        if system_prompt:
            payload_messages.append({"role": "system", "content": system_prompt})
        for role, content in messages:
            wire_role = "user" if role == Role.EXECUTOR.value else role
            payload_messages.append({"role": wire_role, "content": content})
        payload = {"model": self.model, "messages": payload_messages}
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last_exc: Exception | None = None
        for attempt in range(self.retries):
            try:
                response = self._post(payload, headers)
                return self._parse(response)
            except httpx.TransportError as exc:
                last_exc = exc
                if attempt + 1 < self.retries:
                    wait = self.backoff_base * (2**attempt)
                    logger.warning(
                        "transport failure to %s (attempt %d/%d), retrying in %.1fs: %s",
                        self.endpoint, attempt + 1, self.retries, wait, exc,
                    )
                    time.sleep(wait)
        raise BackendError(f"backend unreachable after {self.retries} attempts: {last_exc}")

    def _post(self, payload: dict, headers: dict) -> dict:
        resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        if resp.status_code >= 400:
            raise BackendError(f"backend returned HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def _parse(self, data: dict) -> tuple[str, TokenUsage | None]:
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
        usage = None
        if isinstance(data.get("usage"), dict):
            u = data["usage"]
            if "prompt_tokens" in u and "completion_tokens" in u:
                usage = TokenUsage(int(u["prompt_tokens"]), int(u["completion_tokens"]))
        return text, usage

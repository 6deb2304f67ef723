"""Shared domain types and pure parsing helpers.

Everything here is an immutable value object, safe to share between
concurrent tasks.
"""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from enum import Enum

logger = logging.getLogger(__name__)

SENTINEL = "TERMINATE"

_FAKE_KEY_RE = re.compile(r"^[0-9a-f]{8}$")
_FENCE_RE = re.compile(r"^\s*```")


class Role(str, Enum):
    USER = "user"
    ASSISTANT = "assistant"
    EXECUTOR = "executor"


class Termination(str, Enum):
    SENTINEL = "sentinel"
    MAX_TURNS = "max_turns"
    CONTEXT_OVERFLOW = "context_overflow"
    ERROR = "error"


@dataclass(frozen=True)
class ApiSpec:
    """An external API: its name, the fake key shown to models, and the
    name of the env var holding the real key (the real value is never
    stored here)."""

    name: str
    fake_key: str
    real_key_ref: str

    def __post_init__(self) -> None:
        if not _FAKE_KEY_RE.match(self.fake_key):
            raise ValueError(
                f"fake_key must be 8 lowercase hex chars, got {self.fake_key!r}"
            )


def generate_fake_key(rng: random.Random) -> str:
    """Draw a four-byte value from rng and render it as 8 lowercase hex chars."""
    return format(rng.getrandbits(32), "08x")


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    api: ApiSpec
    arrival_index: int

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("query text must be nonempty")
        if self.arrival_index < 0:
            raise ValueError("arrival_index must be nonnegative")


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be nonnegative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )


@dataclass(frozen=True)
class Message:
    role: Role
    content: str
    turn_index: int
    usage: TokenUsage | None = None  # set on assistant messages only


@dataclass(frozen=True)
class Conversation:
    """One finished assistant/executor transcript.

    final_code holds the last program actually executed, in fake-key form
    (the real key is never persisted). errored marks transport-level
    backend failures, which are distinct from the model merely failing.
    """

    id: str
    query_id: str
    tier_index: int
    messages: tuple[Message, ...]
    termination: Termination
    final_code: str | None = None
    errored: bool = False

    def assistant_turns(self) -> int:
        return sum(1 for m in self.messages if m.role is Role.ASSISTANT)

    def last_assistant_message(self) -> Message | None:
        for m in reversed(self.messages):
            if m.role is Role.ASSISTANT:
                return m
        return None

    def to_dict(self) -> dict:
        """Stable transcript schema shared by the service API, console and judge."""
        return {
            "id": self.id,
            "query_id": self.query_id,
            "tier_index": self.tier_index,
            "termination": self.termination.value,
            "errored": self.errored,
            "final_code": self.final_code,
            "messages": [
                {
                    "role": m.role.value,
                    "content": m.content,
                    "turn_index": m.turn_index,
                    "usage": (
                        {
                            "prompt_tokens": m.usage.prompt_tokens,
                            "completion_tokens": m.usage.completion_tokens,
                        }
                        if m.usage
                        else None
                    ),
                }
                for m in self.messages
            ],
        }


class VerdictSourceKind(str, Enum):
    HUMAN = "human"
    JUDGE = "judge"


@dataclass(frozen=True)
class Verdict:
    success: bool
    source: VerdictSourceKind
    latency: float = 0.0
    errored: bool = False


def extract_code_blocks(message_content: str) -> list[str]:
    """Return the contents of every triple-backtick fenced block, in order.

    The opening fence's language tag is stripped. An unterminated fence is
    recovered by treating everything to end-of-message as one block (a
    warning is logged).
    """
    blocks: list[str] = []
    current: list[str] | None = None
    for line in message_content.splitlines():
        if _FENCE_RE.match(line):
            if current is None:
                current = []
            else:
                blocks.append(_join_block(current))
                current = None
        elif current is not None:
            current.append(line)
    if current is not None:
        logger.warning("unterminated code fence; taking rest of message as one block")
        blocks.append(_join_block(current))
    return blocks


def _join_block(lines: list[str]) -> str:
    return "\n".join(lines) + "\n" if lines else ""


def is_terminate(message_content: str, sentinel: str = SENTINEL) -> bool:
    """True iff the message, after trimming trailing whitespace, ends with
    the sentinel as an exact, case-sensitive token."""
    trimmed = message_content.rstrip()
    if not trimmed.endswith(sentinel):
        return False
    head = trimmed[: -len(sentinel)]
    # token boundary: "RETERMINATE" does not terminate
    return not head or not (head[-1].isalnum() or head[-1] == "_")

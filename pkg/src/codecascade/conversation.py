"""Drive one automated assistant/executor conversation to termination.

Per assistant message the checks run in a fixed order: sentinel first
(an explicit stop signal always wins, and a sentinel message is never
executed even if it contains code), then the turn cap, then code
extraction and execution. A completion that would not fit the context
window ends the conversation instead of being attempted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

from .backends import (
    BackendError,
    ChatBackend,
    ChatExchange,
    ContextOverflowError,
    ModelProfile,
    complete,
    estimate_tokens,
)
from .core import (
    SENTINEL,
    Conversation,
    Message,
    Role,
    Termination,
    extract_code_blocks,
    is_terminate,
)
from .executor import Executor, format_executor_reply
from .prompts import ASSISTANT_SYSTEM_PROMPT

logger = logging.getLogger(__name__)

MessageCallback = Callable[[Message], None]


@dataclass(frozen=True)
class ConversationConfig:
    max_turns: int = 5
    sentinel: str = SENTINEL
    context_margin: int = 256
    system_prompt: str = ASSISTANT_SYSTEM_PROMPT

    def __post_init__(self) -> None:
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")


@dataclass(frozen=True)
class Assistant:
    """A hierarchy tier: one model profile bound to its client."""

    profile: ModelProfile
    backend: ChatBackend


def _assemble_program(blocks: list[str]) -> str:
    """Concatenate all fenced blocks of one message into a single program."""
    return "".join(b if b.endswith("\n") else b + "\n" for b in blocks)


def run_conversation(
    assistant: Assistant,
    executor: Executor,
    initial_prompt: str,
    config: ConversationConfig,
    query,
    tier_index: int = 0,
    on_message: MessageCallback | None = None,
    on_exchange: Callable[[ChatExchange], None] | None = None,
) -> Conversation:
    """Run the loop until sentinel, turn cap, context overflow or error.

    on_message fires for every appended message in order; on_exchange fires
    once per backend completion (the costed events).
    """
    conv_id = f"{query.id}:t{tier_index}"
    messages: list[Message] = []
    final_code: str | None = None

    def append(msg: Message) -> None:
        messages.append(msg)
        if on_message:
            on_message(msg)

    def finish(termination: Termination, errored: bool = False) -> Conversation:
        return Conversation(
            id=conv_id,
            query_id=query.id,
            tier_index=tier_index,
            messages=tuple(messages),
            termination=termination,
            final_code=final_code,
            errored=errored,
        )

    append(Message(role=Role.USER, content=initial_prompt, turn_index=0))

    assistant_turns = 0
    while True:
        if _would_overflow(messages, config, assistant.profile):
            return finish(Termination.CONTEXT_OVERFLOW)
        try:
            exchange = complete(
                assistant.profile,
                assistant.backend,
                [(m.role.value, m.content) for m in messages],
                config.system_prompt,
            )
        except ContextOverflowError:
            return finish(Termination.CONTEXT_OVERFLOW)
        except BackendError as exc:
            logger.warning("backend error mid-conversation (tier %d): %s", tier_index, exc)
            return finish(Termination.ERROR, errored=True)
        if on_exchange:
            on_exchange(exchange)

        assistant_turns += 1
        append(
            Message(
                role=Role.ASSISTANT,
                content=exchange.response_text,
                turn_index=len(messages),
                usage=exchange.usage,
            )
        )

        if is_terminate(exchange.response_text, config.sentinel):
            return finish(Termination.SENTINEL)
        if assistant_turns >= config.max_turns:
            return finish(Termination.MAX_TURNS)

        blocks = extract_code_blocks(exchange.response_text)
        if blocks:
            program = _assemble_program(blocks)
            final_code = program
            result = executor.run(program, query.api)
        else:
            result = None
        append(
            Message(
                role=Role.EXECUTOR,
                content=format_executor_reply(result),
                turn_index=len(messages),
            )
        )


def _would_overflow(
    messages: list[Message], config: ConversationConfig, profile: ModelProfile
) -> bool:
    tokens = estimate_tokens(config.system_prompt) + sum(
        estimate_tokens(m.content) for m in messages
    )
    return tokens + config.context_margin >= profile.context_window


def classify_success_candidate(conv: Conversation) -> bool:
    """Gate before any verdict: a conversation that never executed code and
    never signalled the sentinel is auto-failed without consulting anyone."""
    return conv.final_code is not None or conv.termination is Termination.SENTINEL

"""Verdicts: judge-model evaluation of full transcripts, human feedback
channels, and confusion-matrix quality metrics for the judge itself.

Judge replies are parsed strictly: the last line wins if it is a
standalone yes/no; otherwise the whole reply must contain exactly one of
the two tokens. Anything ambiguous earns one reprompt, after which the
verdict is an errored failure.
"""

from __future__ import annotations

import logging
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable, Sequence

from .backends import BackendError, ChatBackend, ModelProfile, complete, cost_of
from .core import Conversation, Verdict, VerdictSourceKind
from .ledger import Ledger, LedgerEntry, LedgerEvent, usd_to_microusd
from .prompts import JUDGE_REPROMPT, JUDGE_SYSTEM_PROMPT

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_STANDALONE_RE = re.compile(r"^(yes|no)[.!]?$", re.IGNORECASE)


@dataclass(frozen=True)
class JudgeConfig:
    profile: ModelProfile
    backend: ChatBackend
    system_prompt: str = JUDGE_SYSTEM_PROMPT


def parse_judge_reply(reply: str) -> bool | None:
    """Extract the yes/no decision, or None if unparseable/ambiguous."""
    lines = [line.strip() for line in reply.strip().splitlines() if line.strip()]
    if lines:
        m = _STANDALONE_RE.match(lines[-1])
        if m:
            return m.group(1).lower() == "yes"
    found = {m.group(1).lower() for m in _TOKEN_RE.finditer(reply)}
    if len(found) == 1:
        return found.pop() == "yes"
    return None


def serialize_transcripts(conversations: Sequence[Conversation]) -> str:
    """Flatten every attempted conversation for the judge prompt."""
    parts = []
    for conv in conversations:
        parts.append(f"[conversation at tier {conv.tier_index}]")
        for msg in conv.messages:
            parts.append(f"{msg.role.value}: {msg.content}")
        parts.append(f"[ended: {conv.termination.value}]")
    return "\n".join(parts)


def judge(
    conversations: Sequence[Conversation],
    config: JudgeConfig,
    query_id: str = "",
    ledger: Ledger | None = None,
) -> Verdict:
    """Ask the judge backend whether the query was handled successfully.

    Cost and latency of every judge call are recorded to the ledger (they
    are system cost in autonomous mode).
    """
    if not conversations:
        raise ValueError("judge needs at least one conversation")
    transcript = serialize_transcripts(conversations)
    messages: list[tuple[str, str]] = [("user", transcript)]
    start = time.monotonic()
    decision: bool | None = None
    errored = False
    for attempt in range(2):
        try:
            exchange = complete(config.profile, config.backend, messages, config.system_prompt)
        except BackendError as exc:
            logger.warning("judge backend error: %s", exc)
            errored = True
            break
        if ledger is not None:
            ledger.record(
                LedgerEntry(
                    timestamp=ledger.next_timestamp(),
                    query_id=query_id,
                    event=LedgerEvent.JUDGE_CALL,
                    rank=None,
                    usage=exchange.usage,
                    cost=usd_to_microusd(cost_of(exchange.usage, config.profile)),
                    duration=exchange.wall_time,
                )
            )
        decision = parse_judge_reply(exchange.response_text)
        if decision is not None:
            break
        messages.append(("assistant", exchange.response_text))
        messages.append(("user", JUDGE_REPROMPT))
    latency = time.monotonic() - start
    if decision is None:
        return Verdict(success=False, source=VerdictSourceKind.JUDGE, latency=latency, errored=True)
    return Verdict(success=decision, source=VerdictSourceKind.JUDGE, latency=latency, errored=errored)


class ChannelClosed(Exception):
    """The human feedback channel went away; the run can resume later."""


class JudgeVerdictSource:
    """Autonomous mode: the judge gates store insertion and escalation."""

    source = VerdictSourceKind.JUDGE

    def __init__(self, config: JudgeConfig, ledger: Ledger | None = None):
        self.config = config
        self.ledger = ledger

    def decide(self, query, conversations: Sequence[Conversation]) -> Verdict:
        return judge(conversations, self.config, query_id=query.id, ledger=self.ledger)


class ConsoleVerdictSource:
    """Blocking rendezvous on stdin: accepts y/n (or yes/no) keystrokes."""

    source = VerdictSourceKind.HUMAN

    def __init__(self, prompt_fn: Callable[[str], str] = input, echo: Callable[[str], None] = print):
        self.prompt_fn = prompt_fn
        self.echo = echo

    def decide(self, query, conversations: Sequence[Conversation]) -> Verdict:
        self.echo(serialize_transcripts(conversations[-1:]))
        start = time.monotonic()
        while True:
            try:
                answer = self.prompt_fn(
                    f"Was query {query.id} handled successfully at tier "
                    f"{conversations[-1].tier_index}? [y/n] "
                ).strip().lower()
            except EOFError as exc:
                raise ChannelClosed("feedback channel closed") from exc
            if answer in ("y", "yes"):
                return Verdict(True, VerdictSourceKind.HUMAN, time.monotonic() - start)
            if answer in ("n", "no"):
                return Verdict(False, VerdictSourceKind.HUMAN, time.monotonic() - start)
            self.echo("please answer y or n")


class QueueVerdictSource:
    """Rendezvous for the HTTP service: decide() blocks until resolve() is
    called from the feedback endpoint. Only one decision is pending at a
    time (the stream is sequential)."""

    source = VerdictSourceKind.HUMAN

    def __init__(self, on_pending: Callable[[str, int], None] | None = None):
        self._cond = threading.Condition()
        self._pending: tuple[str, int] | None = None  # (query_id, tier_rank)
        self._decision: bool | None = None
        self._closed = False
        self._on_pending = on_pending

    @property
    def pending(self) -> tuple[str, int] | None:
        with self._cond:
            return self._pending

    def decide(self, query, conversations: Sequence[Conversation]) -> Verdict:
        start = time.monotonic()
        tier = conversations[-1].tier_index
        with self._cond:
            self._pending = (query.id, tier)
            self._decision = None
            self._cond.notify_all()
        if self._on_pending:
            self._on_pending(query.id, tier)
        with self._cond:
            while self._decision is None and not self._closed:
                self._cond.wait()
            if self._closed and self._decision is None:
                self._pending = None
                raise ChannelClosed("feedback channel closed")
            decision = self._decision
            self._pending = None
            self._decision = None
        return Verdict(bool(decision), VerdictSourceKind.HUMAN, time.monotonic() - start)

    def resolve(self, query_id: str, success: bool) -> bool:
        """Deliver a decision; False when nothing matching is pending."""
        with self._cond:
            if self._pending is None or self._pending[0] != query_id or self._decision is not None:
                return False
            self._decision = success
            self._cond.notify_all()
            return True

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


class ScriptedVerdictSource:
    """Deterministic verdicts for tests/simulation: success iff the final
    assistant message contains the marker."""

    source = VerdictSourceKind.HUMAN

    def __init__(self, marker: str = "ANSWER:"):
        self.marker = marker

    def decide(self, query, conversations: Sequence[Conversation]) -> Verdict:
        last = conversations[-1].last_assistant_message()
        success = last is not None and self.marker in last.content
        return Verdict(success, VerdictSourceKind.HUMAN, 0.0)


@dataclass(frozen=True)
class JudgeQuality:
    accuracy: float
    precision: float
    recall: float


def judge_quality(
    judge_verdicts: Sequence[bool], ground_truth: Sequence[bool]
) -> JudgeQuality:
    """Confusion-matrix metrics with success as the positive class.

    Under this convention a judge that is never wrong when it declares
    failure produces zero false negatives, i.e. recall = 100.
    Vacuous denominators count as perfect (no chance to be wrong).
    """
    if len(judge_verdicts) != len(ground_truth):
        raise ValueError("label sequences must be aligned and equal length")
    if not judge_verdicts:
        raise ValueError("cannot score an empty label set")
    tp = sum(1 for j, t in zip(judge_verdicts, ground_truth) if j and t)
    fp = sum(1 for j, t in zip(judge_verdicts, ground_truth) if j and not t)
    fn = sum(1 for j, t in zip(judge_verdicts, ground_truth) if not j and t)
    tn = sum(1 for j, t in zip(judge_verdicts, ground_truth) if not j and not t)
    accuracy = 100.0 * (tp + tn) / len(judge_verdicts)
    precision = 100.0 * tp / (tp + fp) if (tp + fp) else 100.0
    recall = 100.0 * tp / (tp + fn) if (tp + fn) else 100.0
    return JudgeQuality(accuracy=accuracy, precision=precision, recall=recall)

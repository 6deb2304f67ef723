"""Per-query pipeline: build the initial prompt, escalate through the
assistant hierarchy, obtain a verdict, update the solution store.

Escalation is strictly cheapest-first with no tier skipping; each tier
gets a fresh conversation with the same initial prompt. The demonstration
is retrieved once per query, before any tier runs, so a query can never
retrieve its own not-yet-inserted solution. Costs of failed tiers are real
spend and are accumulated into the query's cost.
"""

from __future__ import annotations

import logging
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .backends import cost_of
from .conversation import (
    Assistant,
    ConversationConfig,
    classify_success_candidate,
    run_conversation,
)
from .core import Conversation, Message, Query, Verdict
from .executor import Executor
from .judging import ChannelClosed
from .ledger import CurvePoint, Ledger, LedgerEntry, LedgerEvent, usd_to_microusd
from .prompts import API_SECTION_TEMPLATE, COT_SUFFIX, DEMO_SECTION_TEMPLATE
from .store import SolutionRecord, SolutionStore

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolicyFlags:
    use_hierarchy: bool = True
    use_solution_demo: bool = True
    use_cot: bool = False


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    verdict: Verdict
    conversations: tuple[Conversation, ...]
    model_calls_per_rank: dict[int, int]
    cost: int  # micro-dollars, all tiers attempted plus judge calls
    wall_time: float
    demo_used: str | None = None
    errored: bool = False

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "success": self.verdict.success,
            "verdict_source": self.verdict.source.value,
            "tiers_attempted": [c.tier_index for c in self.conversations],
            "model_calls_per_rank": {str(k): v for k, v in sorted(self.model_calls_per_rank.items())},
            "cost_microusd": self.cost,
            "wall_time": self.wall_time,
            "demo_used": self.demo_used,
            "errored": self.errored,
            "conversations": [c.to_dict() for c in self.conversations],
        }


class VerdictSource(Protocol):
    source: object

    def decide(self, query: Query, conversations: Sequence[Conversation]) -> Verdict: ...


class PipelineObserver(Protocol):
    """Hook points for live transcript streaming; all optional no-ops."""

    def on_tier_start(self, query: Query, tier_rank: int) -> None: ...

    def on_message(self, query: Query, tier_rank: int, message: Message) -> None: ...

    def on_verdict(self, query: Query, result: "QueryResult") -> None: ...


def build_initial_prompt(
    query: Query, demo: SolutionRecord | None, flags: PolicyFlags
) -> str:
    """Assemble the first user message: API section, optional demonstration,
    the query, optional step-by-step suffix (exactly at the end)."""
    sections = [
        API_SECTION_TEMPLATE.format(api_name=query.api.name, fake_key=query.api.fake_key)
    ]
    if flags.use_solution_demo and demo is not None:
        code = demo.code if demo.code.endswith("\n") else demo.code + "\n"
        sections.append(
            DEMO_SECTION_TEMPLATE.format(demo_query=demo.query_text, demo_code=code)
        )
    sections.append(query.text)
    if flags.use_cot:
        sections.append(COT_SUFFIX)
    return "\n\n".join(sections)


@dataclass
class QueryPipeline:
    """Shared pipeline behind both the CLI replay path and the service.

    Holds the mutable run state (store, ledger, cumulative curves); process()
    handles one query, run_stream() a whole ordered list.
    """

    hierarchy: list[Assistant]
    store: SolutionStore
    verdict_source: VerdictSource
    flags: PolicyFlags
    ledger: Ledger
    conversation_config: ConversationConfig = field(default_factory=ConversationConfig)
    executor_factory: Callable[[], Executor] | None = None
    observer: PipelineObserver | None = None
    curves: list[CurvePoint] = field(default_factory=list)
    results: list[QueryResult] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.hierarchy:
            raise ValueError("hierarchy must be nonempty")
        ranks = [a.profile.rank for a in self.hierarchy]
        if ranks != sorted(ranks) or len(set(ranks)) != len(ranks):
            raise ValueError("hierarchy must be sorted by unique ascending rank")
        if self.executor_factory is None:
            from .executor import SandboxExecutor

            self.executor_factory = SandboxExecutor

    def _tiers(self) -> list[Assistant]:
        if self.flags.use_hierarchy:
            return list(self.hierarchy)
        return [self.hierarchy[-1]]  # single-assistant baseline: highest rank only

    def process(self, query: Query) -> QueryResult:
        start = time.monotonic()
        demo: SolutionRecord | None = None
        if self.flags.use_solution_demo:
            hit = self.store.retrieve_top1(query.text)
            if hit is not None:
                demo = hit[0]
        prompt = build_initial_prompt(query, demo, self.flags)

        conversations: list[Conversation] = []
        calls_per_rank: dict[int, int] = {}
        cost = 0
        verdict: Verdict | None = None

        for assistant in self._tiers():
            rank = assistant.profile.rank
            if self.observer:
                self.observer.on_tier_start(query, rank)
            executor = self.executor_factory()

            def on_message(message: Message, _rank: int = rank) -> None:
                if self.observer:
                    self.observer.on_message(query, _rank, message)

            def on_exchange(exchange, _assistant: Assistant = assistant) -> None:
                nonlocal cost
                micros = usd_to_microusd(cost_of(exchange.usage, _assistant.profile))
                cost += micros
                calls_per_rank[_assistant.profile.rank] = (
                    calls_per_rank.get(_assistant.profile.rank, 0) + 1
                )
                self.ledger.record(
                    LedgerEntry(
                        timestamp=self.ledger.next_timestamp(),
                        query_id=query.id,
                        event=LedgerEvent.MODEL_CALL,
                        rank=_assistant.profile.rank,
                        usage=exchange.usage,
                        cost=micros,
                        duration=exchange.wall_time,
                    )
                )

            conv = run_conversation(
                assistant,
                executor,
                prompt,
                self.conversation_config,
                query,
                tier_index=rank,
                on_message=on_message,
                on_exchange=on_exchange,
            )
            conversations.append(conv)
            if conv.final_code is not None:
                self.ledger.record(
                    LedgerEntry(
                        timestamp=self.ledger.next_timestamp(),
                        query_id=query.id,
                        event=LedgerEvent.EXECUTION,
                        rank=rank,
                    )
                )

            if not classify_success_candidate(conv):
                verdict = Verdict(False, self.verdict_source.source)
            else:
                verdict = self.verdict_source.decide(query, conversations)
            if verdict.success:
                break  # escalate only on failure

        assert verdict is not None
        judge_cost = sum(
            e.cost
            for e in self.ledger.entries_for(query.id)
            if e.event is LedgerEvent.JUDGE_CALL
        )
        cost += judge_cost
        errored = bool(conversations) and all(c.errored for c in conversations)

        if verdict.success and self.flags.use_solution_demo:
            final = conversations[-1]
            if final.final_code:
                self.store.insert(
                    query_id=query.id,
                    query_text=query.text,
                    code=final.final_code,
                    solved_by_rank=final.tier_index,
                )
            else:
                logger.info(
                    "query %s succeeded without executed code; nothing to store", query.id
                )

        wall = time.monotonic() - start
        self.ledger.record(
            LedgerEntry(
                timestamp=self.ledger.next_timestamp(),
                query_id=query.id,
                event=LedgerEvent.VERDICT,
                rank=None,
                duration=verdict.latency,
                verdict_success=verdict.success,
            )
        )
        result = QueryResult(
            query_id=query.id,
            verdict=verdict,
            conversations=tuple(conversations),
            model_calls_per_rank=calls_per_rank,
            cost=cost,
            wall_time=wall,
            demo_used=demo.query_id if demo is not None else None,
            errored=errored,
        )
        self.results.append(result)
        prev = self.curves[-1] if self.curves else CurvePoint(0, 0, 0)
        self.curves.append(
            CurvePoint(
                queries_processed=prev.queries_processed + 1,
                cumulative_successes=prev.cumulative_successes + (1 if verdict.success else 0),
                cumulative_cost=prev.cumulative_cost + cost,
            )
        )
        if self.observer:
            self.observer.on_verdict(query, result)
        return result

    def run_stream(
        self, queries: Sequence[Query], skip_decided: bool = False
    ) -> list[QueryResult]:
        """Process queries strictly in order; store updates from query i are
        visible to query i+1. Per-query errors are isolated; a closed
        feedback channel stops the stream cleanly (resume by re-running with
        skip_decided over the same ledger)."""
        decided = self.ledger.decided_query_ids() if skip_decided else set()
        out: list[QueryResult] = []
        for query in queries:
            if query.id in decided:
                logger.info("skipping already-decided query %s", query.id)
                continue
            try:
                out.append(self.process(query))
            except ChannelClosed:
                logger.warning("feedback channel closed; stopping stream before %s", query.id)
                break
            except Exception:
                logger.exception("query %s raised; continuing stream", query.id)
        return out


def process_query(
    query: Query,
    hierarchy: list[Assistant],
    store: SolutionStore,
    verdict_source: VerdictSource,
    flags: PolicyFlags,
    ledger: Ledger,
    **kwargs,
) -> QueryResult:
    """One-shot convenience wrapper over QueryPipeline.process."""
    pipeline = QueryPipeline(
        hierarchy=hierarchy,
        store=store,
        verdict_source=verdict_source,
        flags=flags,
        ledger=ledger,
        **kwargs,
    )
    return pipeline.process(query)

"""Append-only accounting of model calls, executions and verdicts.

Money is carried as integer micro-dollars so that sums are exact; the
conversion from decimal dollars happens once, here. Entries are
immutable once written and timestamps never move backwards within a run.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from enum import Enum
from pathlib import Path

from .core import TokenUsage

MICROS_PER_DOLLAR = 10**6


def usd_to_microusd(usd: Decimal) -> int:
    """Quantize an exact decimal dollar amount to integer micro-dollars."""
    micros = usd * MICROS_PER_DOLLAR
    return int(micros.quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def microusd_to_usd_str(micros: int) -> str:
    """Render micro-dollars as a fixed six-decimal dollar string."""
    sign = "-" if micros < 0 else ""
    micros = abs(micros)
    return f"{sign}{micros // MICROS_PER_DOLLAR}.{micros % MICROS_PER_DOLLAR:06d}"


class LedgerEvent(str, Enum):
    MODEL_CALL = "model_call"
    JUDGE_CALL = "judge_call"
    EXECUTION = "execution"
    VERDICT = "verdict"

COSTED_EVENTS = {LedgerEvent.MODEL_CALL, LedgerEvent.JUDGE_CALL}


@dataclass(frozen=True)
class LedgerEntry:
    timestamp: float
    query_id: str
    event: LedgerEvent
    rank: int | None = None
    usage: TokenUsage | None = None
    cost: int | None = None  # micro-dollars; present iff costed event
    duration: float = 0.0
    verdict_success: bool | None = None  # verdict events only

    def __post_init__(self) -> None:
        if (self.cost is not None) != (self.event in COSTED_EVENTS):
            raise ValueError(f"cost must be present iff costed event, got {self.event}")

    def to_json(self) -> str:
        record = {
            "timestamp": self.timestamp,
            "query_id": self.query_id,
            "event": self.event.value,
            "rank": self.rank,
            "usage": (
                [self.usage.prompt_tokens, self.usage.completion_tokens]
                if self.usage
                else None
            ),
            "cost": self.cost,
            "duration": self.duration,
        }
        if self.event is LedgerEvent.VERDICT:
            record["verdict_success"] = self.verdict_success
        return json.dumps(record, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "LedgerEntry":
        d = json.loads(line)
        usage = TokenUsage(*d["usage"]) if d.get("usage") else None
        return cls(
            timestamp=d["timestamp"],
            query_id=d["query_id"],
            event=LedgerEvent(d["event"]),
            rank=d.get("rank"),
            usage=usage,
            cost=d.get("cost"),
            duration=d.get("duration", 0.0),
            verdict_success=d.get("verdict_success"),
        )


class Ledger:
    """Durable append-only entry log; single writer, tailing readers.

    A storage failure propagates and aborts the run: accounting integrity
    beats availability here.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.entries: list[LedgerEntry] = []
        self._by_query: dict[str, list[LedgerEntry]] = {}
        self._total_cost = 0
        self._lock = threading.Lock()
        self._last_ts = 0.0
        self._fh = None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self._replay()
            self._fh = open(self.path, "a", encoding="utf-8")

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._append(LedgerEntry.from_json(line))
        if self.entries:
            self._last_ts = max(e.timestamp for e in self.entries)

    def _append(self, entry: LedgerEntry) -> None:
        self.entries.append(entry)
        self._by_query.setdefault(entry.query_id, []).append(entry)
        if entry.cost is not None:
            self._total_cost += entry.cost

    def next_timestamp(self) -> float:
        now = time.time()
        with self._lock:
            self._last_ts = max(self._last_ts, now)
            return self._last_ts

    def record(self, entry: LedgerEntry) -> None:
        with self._lock:
            if entry.timestamp < self._last_ts:
                entry = LedgerEntry(
                    timestamp=self._last_ts,
                    query_id=entry.query_id,
                    event=entry.event,
                    rank=entry.rank,
                    usage=entry.usage,
                    cost=entry.cost,
                    duration=entry.duration,
                    verdict_success=entry.verdict_success,
                )
            self._last_ts = entry.timestamp
            self._append(entry)
            if self._fh:
                self._fh.write(entry.to_json() + "\n")
                self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    def entries_for(self, query_id: str) -> list[LedgerEntry]:
        with self._lock:
            return list(self._by_query.get(query_id, []))

    def total_cost(self) -> int:
        with self._lock:
            return self._total_cost

    def decided_query_ids(self) -> set[str]:
        """Query ids that already carry a final verdict (used for resume)."""
        with self._lock:
            return {e.query_id for e in self.entries if e.event is LedgerEvent.VERDICT}

    @classmethod
    def load(cls, path: str | Path) -> "Ledger":
        ledger = cls(path=None)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    ledger.entries.append(LedgerEntry.from_json(line))
        if ledger.entries:
            ledger._last_ts = max(e.timestamp for e in ledger.entries)
        return ledger


@dataclass(frozen=True)
class CurvePoint:
    queries_processed: int
    cumulative_successes: int
    cumulative_cost: int  # micro-dollars


@dataclass
class RunSummary:
    queries: int
    successes: int
    success_rate: float  # percent
    total_cost: int  # micro-dollars
    avg_model_calls_per_rank: dict[int, float]
    total_runtime_s: float
    curves: list[CurvePoint] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "queries": self.queries,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "total_cost_microusd": self.total_cost,
            "total_cost_usd": microusd_to_usd_str(self.total_cost),
            "avg_model_calls_per_rank": {
                str(rank): calls for rank, calls in sorted(self.avg_model_calls_per_rank.items())
            },
            "total_runtime_s": self.total_runtime_s,
            "curves": [
                [p.queries_processed, p.cumulative_successes, p.cumulative_cost]
                for p in self.curves
            ],
        }


def summarize(entries: list[LedgerEntry], total_runtime_s: float = 0.0) -> RunSummary:
    """Derive run metrics from ledger entries alone.

    A query counts once per verdict entry; per-rank averages divide total
    model calls at that rank by the query count, so a tier that was never
    invoked for a query pulls its average down (toward 0).
    """
    verdicts = [e for e in entries if e.event is LedgerEvent.VERDICT]
    queries = len(verdicts)
    if queries == 0:
        raise ValueError("cannot summarize a run with zero queries")
    successes = sum(1 for e in verdicts if e.verdict_success)
    total_cost = sum(e.cost for e in entries if e.cost is not None)

    calls_per_rank: dict[int, int] = {}
    for e in entries:
        if e.event is LedgerEvent.MODEL_CALL and e.rank is not None:
            calls_per_rank[e.rank] = calls_per_rank.get(e.rank, 0) + 1
    avg = {rank: count / queries for rank, count in calls_per_rank.items()}

    curves: list[CurvePoint] = []
    done = 0
    cum_success = 0
    cum_cost = 0
    cost_by_query: dict[str, int] = {}
    for e in entries:
        if e.cost is not None:
            cost_by_query[e.query_id] = cost_by_query.get(e.query_id, 0) + e.cost
    for e in entries:
        if e.event is LedgerEvent.VERDICT:
            done += 1
            cum_success += 1 if e.verdict_success else 0
            cum_cost += cost_by_query.get(e.query_id, 0)
            curves.append(CurvePoint(done, cum_success, cum_cost))

    return RunSummary(
        queries=queries,
        successes=successes,
        success_rate=100.0 * successes / queries,
        total_cost=total_cost,
        avg_model_calls_per_rank=avg,
        total_runtime_s=total_runtime_s,
        curves=curves,
    )

"""Long-running HTTP service over the pipeline.

One active stream per instance: submissions queue FIFO, a worker thread
drives the pipeline, and any number of subscribers can tail a query's
transcript as server-sent events. In human mode the stream blocks on the
feedback endpoint between tiers, exactly like the console CLI path.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, StreamingResponse
from pydantic import BaseModel

from .core import ApiSpec, Message, Query
from .datasets import fake_key_for
from .executor import SandboxExecutor
from .judging import JudgeVerdictSource, QueueVerdictSource
from .ledger import Ledger, microusd_to_usd_str, summarize
from .orchestrator import QueryPipeline, QueryResult
from .reporting import CURVE_HEADER
from .runconfig import RunConfig
from .store import HashedBagOfWords, SolutionStore

logger = logging.getLogger(__name__)


class SubmitPayload(BaseModel):
    query: str
    api: str
    key_env: str
    id: str | None = None


class FeedbackPayload(BaseModel):
    query_id: str
    success: bool
    note: str | None = None


@dataclass
class QueryState:
    query: Query
    state: str = "queued"  # queued | running | awaiting_feedback | done
    events: list[dict] = field(default_factory=list)
    result: QueryResult | None = None


class ServiceRuntime:
    """Owns the pipeline, the FIFO submission queue and per-query event logs."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.ledger = Ledger(config.ledger_path)
        self.store = SolutionStore(
            embedder=HashedBagOfWords(config.embedder_dim),
            path=config.store_path,
            floor=config.retrieval_floor,
        )
        self.human_source: QueueVerdictSource | None = None
        if config.verdict_mode == "human":
            self.human_source = QueueVerdictSource(on_pending=self._on_pending)
            verdict_source = self.human_source
        else:
            assert config.judge is not None
            verdict_source = JudgeVerdictSource(config.judge, ledger=self.ledger)
        sandbox = config.sandbox
        self.pipeline = QueryPipeline(
            hierarchy=config.hierarchy,
            store=self.store,
            verdict_source=verdict_source,
            flags=config.flags,
            ledger=self.ledger,
            conversation_config=config.conversation,
            executor_factory=lambda: SandboxExecutor(
                interpreter=sandbox.interpreter,
                timeout=sandbox.timeout_s,
                stream_cap=sandbox.stream_cap_bytes,
            ),
            observer=self,
        )
        self.states: dict[str, QueryState] = {}
        self.order: list[str] = []
        self._queue: "queue.Queue[Query | None]" = queue.Queue()
        self._lock = threading.Lock()
        self._stop = False
        self._api_keys: dict[str, ApiSpec] = {}
        self._next_auto_id = 0
        self._worker = threading.Thread(target=self._run, name="pipeline-worker", daemon=True)
        self._worker.start()

    # -- pipeline observer hooks -------------------------------------------

    def _publish(self, query_id: str, event_type: str, data: dict) -> None:
        with self._lock:
            state = self.states[query_id]
            data = {**data, "query_id": query_id, "seq": len(state.events)}
            state.events.append({"type": event_type, "data": data})

    def on_tier_start(self, query: Query, tier_rank: int) -> None:
        with self._lock:
            self.states[query.id].state = "running"
        self._publish(query.id, "tier", {"tier_rank": tier_rank})

    def _on_pending(self, query_id: str, tier_rank: int) -> None:
        with self._lock:
            self.states[query_id].state = "awaiting_feedback"
        self._publish(query_id, "awaiting_feedback", {"tier_rank": tier_rank})

    def on_message(self, query: Query, tier_rank: int, message: Message) -> None:
        self._publish(
            query.id,
            "turn",
            {
                "tier_rank": tier_rank,
                "turn_index": message.turn_index,
                "role": message.role.value,
                "content": message.content,
            },
        )

    def on_verdict(self, query: Query, result: QueryResult) -> None:
        stored = (
            result.verdict.success
            and self.config.flags.use_solution_demo
            and bool(result.conversations and result.conversations[-1].final_code)
        )
        self._publish(
            query.id,
            "verdict",
            {
                "success": result.verdict.success,
                "source": result.verdict.source.value,
                "stored": stored,
                "cost_microusd": result.cost,
            },
        )
        with self._lock:
            state = self.states[query.id]
            state.state = "done"
            state.result = result

    # -- worker -------------------------------------------------------------

    def _run(self) -> None:
        while not self._stop:
            item = self._queue.get()
            if item is None:
                return
            try:
                self.pipeline.process(item)
            except Exception:
                logger.exception("query %s failed in worker", item.id)
                with self._lock:
                    self.states[item.id].state = "done"

    def submit(self, payload: SubmitPayload) -> Query:
        api = self._api_spec(payload.api, payload.key_env)
        with self._lock:
            qid = payload.id or f"q-{self._next_auto_id:06d}"
            if qid in self.states:
                raise ValueError(f"duplicate query id {qid!r}")
            self._next_auto_id += 1
            query = Query(id=qid, text=payload.query, api=api, arrival_index=len(self.order))
            self.states[qid] = QueryState(query=query)
            self.order.append(qid)
        self._queue.put(query)
        return query

    def _api_spec(self, api_name: str, key_env: str) -> ApiSpec:
        with self._lock:
            if api_name not in self._api_keys:
                issued = {spec.fake_key for spec in self._api_keys.values()}
                fake = fake_key_for(api_name, self.config.seed, key_env, avoid=issued)
                self._api_keys[api_name] = ApiSpec(name=api_name, fake_key=fake, real_key_ref=key_env)
            return self._api_keys[api_name]

    def pending(self) -> dict:
        if self.human_source is None:
            return {"query_id": None, "tier_rank": None}
        pending = self.human_source.pending
        if pending is None:
            return {"query_id": None, "tier_rank": None}
        return {"query_id": pending[0], "tier_rank": pending[1]}

    def feedback(self, payload: FeedbackPayload) -> None:
        with self._lock:
            known = payload.query_id in self.states
        if not known:
            raise HTTPException(status_code=404, detail=f"unknown query_id {payload.query_id!r}")
        if self.human_source is None:
            raise HTTPException(status_code=409, detail="service runs autonomously; no feedback expected")
        if not self.human_source.resolve(payload.query_id, payload.success):
            raise HTTPException(status_code=409, detail="no verdict pending for this query")

    def metrics(self) -> dict:
        entries = list(self.ledger.entries)
        has_verdicts = any(e.event.value == "verdict" for e in entries)
        processing_s = sum(r.wall_time for r in self.pipeline.results)
        if not has_verdicts:
            return {
                "queries": 0,
                "successes": 0,
                "success_rate": 0.0,
                "total_cost_microusd": 0,
                "total_cost_usd": "0.000000",
                "avg_model_calls_per_rank": {},
                "total_runtime_s": 0.0,
                "curves": [],
            }
        return summarize(entries, total_runtime_s=processing_s).to_dict()

    def curves_csv(self) -> str:
        lines = [",".join(CURVE_HEADER)]
        for p in self.pipeline.curves:
            lines.append(
                f"{p.queries_processed},{p.cumulative_successes},{microusd_to_usd_str(p.cumulative_cost)}"
            )
        return "\n".join(lines) + "\n"

    def shutdown(self) -> None:
        self._stop = True
        self._queue.put(None)
        if self.human_source:
            self.human_source.close()
        self.ledger.close()
        self.store.close()


def create_app(config: RunConfig) -> FastAPI:
    runtime = ServiceRuntime(config)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        runtime.shutdown()

    app = FastAPI(title="codecascade", lifespan=lifespan)
    app.state.runtime = runtime

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/queries")
    def submit(payload: SubmitPayload) -> dict:
        try:
            query = runtime.submit(payload)
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return {"query_id": query.id, "position": query.arrival_index}

    @app.get("/queries/{query_id}")
    def query_status(query_id: str) -> dict:
        state = runtime.states.get(query_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown query_id {query_id!r}")
        body = {"query_id": query_id, "state": state.state, "query": state.query.text}
        if state.result is not None:
            body["result"] = state.result.to_dict()
        return body

    @app.get("/queries/{query_id}/events")
    def events(query_id: str, request: Request, after: int = -1) -> StreamingResponse:
        if query_id not in runtime.states:
            raise HTTPException(status_code=404, detail=f"unknown query_id {query_id!r}")
        last_event_id = request.headers.get("last-event-id")
        if last_event_id is not None:
            after = max(after, int(last_event_id))

        def stream():
            cursor = after + 1
            while True:
                state = runtime.states[query_id]
                events_snapshot = list(state.events)
                while cursor < len(events_snapshot):
                    event = events_snapshot[cursor]
                    payload = json.dumps(event["data"], separators=(",", ":"))
                    yield f"id: {event['data']['seq']}\nevent: {event['type']}\ndata: {payload}\n\n"
                    cursor += 1
                if state.state == "done" and cursor >= len(state.events):
                    return
                time.sleep(0.02)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/feedback")
    def feedback(payload: FeedbackPayload) -> dict:
        runtime.feedback(payload)
        return {"recorded": True}

    @app.get("/pending")
    def pending() -> dict:
        return runtime.pending()

    @app.get("/metrics")
    def metrics() -> dict:
        return runtime.metrics()

    @app.get("/curves.csv")
    def curves() -> PlainTextResponse:
        return PlainTextResponse(runtime.curves_csv(), media_type="text/csv")

    @app.get("/store")
    def store_contents(redact: bool = False) -> dict:
        records = [
            {
                "query_id": r.query_id,
                "query_text": r.query_text,
                "code": "[redacted]" if redact else r.code,
                "solved_by_rank": r.solved_by_rank,
                "created_at": r.created_at,
            }
            for r in runtime.store.records()
        ]
        return {"records": records}

    return app


def serve(config: RunConfig) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")

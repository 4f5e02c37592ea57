"""HTTP facade: async runs, newline-delimited event streaming, ingestion, eval.

Each run's trace is appended to a per-run JSONL file as it happens, and the
final answer/state snapshot is written on termination, so terminal runs
survive a service restart. Subscribers always receive the full backlog
first, then live events, gap-free and in seq order.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .engine import Engine, EngineRunError, TraceEvent
from .llm import LlmError
from .evaluation import QuerySpec, apply_labels, build_report, run_corpus
from .rag import RagPipeline
from .store import SensorStore
from .streams import StreamKind, UnknownStreamError
from .timeutil import TimeRange, parse_instant


@dataclass
class RunRecord:
    run_id: str
    created_at: float
    query: str
    instructions: str
    user_id: str
    status: str = "pending"
    events: list[dict] = field(default_factory=list)
    answer: Optional[dict] = None
    state: Optional[dict] = None
    error: Optional[str] = None
    max_iterations: Optional[int] = None  # per-run override from the caller

    @property
    def done(self) -> bool:
        return self.status in ("answered", "unanswerable", "halted_failure",
                               "cutoff", "error")

    def handle(self) -> dict:
        return {"run_id": self.run_id, "created_at": self.created_at,
                "status": self.status, "query": self.query,
                "user_id": self.user_id}


class RunManager:
    """Starts runs on worker threads and fans their trace out to subscribers."""

    def __init__(self, engine: Engine, data_dir: Optional[Path] = None,
                 capacity: int = 8):
        self.engine = engine
        self.capacity = capacity
        self.data_dir = Path(data_dir) / "runs" if data_dir is not None else None
        self._records: dict[str, RunRecord] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._restore()

    # -- lifecycle ---------------------------------------------------------

    def active_count(self) -> int:
        with self._lock:
            return sum(1 for r in self._records.values() if not r.done)

    def create(self, query: str, instructions: str, user_id: str,
               overrides: Optional[dict] = None) -> RunRecord:
        if self.active_count() >= self.capacity:
            raise CapacityError(self.capacity)
        run_id = self.engine.run_id_factory()
        record = RunRecord(run_id, self.engine.clock(), query, instructions, user_id)
        record.max_iterations = (overrides or {}).get("max_iterations")
        with self._lock:
            self._records[run_id] = record
            self._order.append(run_id)
        thread = threading.Thread(target=self._execute, args=(record,), daemon=True)
        thread.start()
        return record

    def _execute(self, record: RunRecord) -> None:
        def on_event(event: TraceEvent) -> None:
            obj = event.to_dict()
            with self._cond:
                record.events.append(obj)
                status = obj.get("payload", {}).get("status")
                if status:
                    record.status = status
                self._persist_event(record, obj)
                self._cond.notify_all()

        try:
            result = self.engine.run(record.query, record.instructions,
                                     on_event=on_event, run_id=record.run_id,
                                     max_iterations=record.max_iterations)
            with self._cond:
                record.answer = result.answer.to_dict()
                record.state = result.state.to_dict()
                record.status = result.state.status.value
                self._persist_final(record)
                self._cond.notify_all()
        except EngineRunError as exc:
            with self._cond:
                record.error = str(exc)
                record.status = "error"
                record.state = exc.state.to_dict()
                if not record.events or record.events[-1].get("phase") != "error":
                    record.events.append({
                        "run_id": record.run_id, "seq": len(record.events),
                        "phase": "error",
                        "payload": {"status": "error", "message": str(exc)},
                        "wall_time": self.engine.clock()})
                self._persist_final(record)
                self._cond.notify_all()

    # -- queries -------------------------------------------------------------

    def get(self, run_id: str) -> Optional[RunRecord]:
        with self._lock:
            return self._records.get(run_id)

    def list_handles(self) -> list[dict]:
        with self._lock:
            return [self._records[rid].handle() for rid in reversed(self._order)]

    def subscribe(self, run_id: str) -> Iterator[dict]:
        """Yield every event in seq order: backlog first, then live until terminal."""
        cursor = 0
        while True:
            with self._cond:
                record = self._records.get(run_id)
                if record is None:
                    return
                while cursor >= len(record.events) and not record.done:
                    self._cond.wait(timeout=30.0)
                batch = record.events[cursor:]
                finished = record.done and cursor + len(batch) >= len(record.events)
            for event in batch:
                yield event
            cursor += len(batch)
            if finished:
                return

    # -- persistence -----------------------------------------------------------

    def _persist_event(self, record: RunRecord, obj: dict) -> None:
        if self.data_dir is None:
            return
        with open(self.data_dir / f"{record.run_id}.events.jsonl", "a") as fh:
            fh.write(json.dumps(obj, sort_keys=True) + "\n")

    def _persist_final(self, record: RunRecord) -> None:
        if self.data_dir is None:
            return
        final = {"run_id": record.run_id, "created_at": record.created_at,
                 "query": record.query, "instructions": record.instructions,
                 "user_id": record.user_id, "status": record.status,
                 "answer": record.answer, "state": record.state,
                 "error": record.error}
        (self.data_dir / f"{record.run_id}.final.json").write_text(
            json.dumps(final, sort_keys=True, indent=2))

    def _restore(self) -> None:
        for final_path in sorted(self.data_dir.glob("*.final.json")):
            obj = json.loads(final_path.read_text())
            record = RunRecord(obj["run_id"], obj["created_at"], obj["query"],
                               obj.get("instructions", ""), obj.get("user_id", ""),
                               obj["status"], [], obj.get("answer"),
                               obj.get("state"), obj.get("error"))
            events_path = self.data_dir / f"{record.run_id}.events.jsonl"
            if events_path.exists():
                record.events = [json.loads(line) for line
                                 in events_path.read_text().splitlines() if line.strip()]
            with self._lock:
                self._records[record.run_id] = record
                self._order.append(record.run_id)
        with self._lock:
            self._order.sort(key=lambda rid: self._records[rid].created_at)


class CapacityError(Exception):
    def __init__(self, capacity: int):
        super().__init__(f"run capacity of {capacity} reached; retry later")
        self.retry_after = 5


def create_app(manager: RunManager, store: SensorStore,
               rag: Optional[RagPipeline] = None,
               ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="sensemaker", version="0.1.0")
    eval_state: dict = {"outcomes": None, "ratings": None}

    @app.post("/runs")
    async def create_run(request: Request):
        body = await request.json()
        query = body.get("query")
        if not isinstance(query, str) or not query.strip():
            return JSONResponse({"error": "field 'query' is required"}, status_code=422)
        overrides = body.get("config") or {}
        if not isinstance(overrides, dict):
            return JSONResponse({"error": "field 'config' must be an object"},
                                status_code=422)
        try:
            record = manager.create(query, body.get("instructions", ""),
                                    body.get("user_id", ""), overrides)
        except CapacityError as exc:
            return JSONResponse({"error": str(exc), "retry_after": exc.retry_after},
                                status_code=429,
                                headers={"Retry-After": str(exc.retry_after)})
        return {"run_id": record.run_id, "status": record.status}

    @app.get("/runs")
    def list_runs():
        return {"runs": manager.list_handles()}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        record = manager.get(run_id)
        if record is None:
            return JSONResponse({"error": f"unknown run {run_id!r}"}, status_code=404)
        if not record.done:
            return JSONResponse({"run_id": run_id, "status": record.status,
                                 "ready": False}, status_code=202)
        return {"run_id": run_id, "status": record.status, "ready": True,
                "answer": record.answer, "state": record.state,
                "error": record.error, "events": record.events}

    @app.get("/runs/{run_id}/events")
    def stream_events(run_id: str):
        if manager.get(run_id) is None:
            return JSONResponse({"error": f"unknown run {run_id!r}"}, status_code=404)

        def gen():
            for event in manager.subscribe(run_id):
                yield json.dumps(event, sort_keys=True) + "\n"

        return StreamingResponse(gen(), media_type="application/x-ndjson")

    @app.post("/ingest/{stream_name}")
    async def ingest(stream_name: str, request: Request):
        try:
            stream = StreamKind.parse(stream_name)
        except UnknownStreamError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)
        body = (await request.body()).decode("utf-8")
        report = store.ingest_stream(stream, body.splitlines())
        return {"accepted": report.accepted, "duplicates": report.duplicates,
                "rejections": [{"line": r.line, "reason": r.reason}
                               for r in report.rejections]}

    @app.post("/rag/query")
    async def rag_query(request: Request):
        if rag is None:
            return JSONResponse({"error": "RAG pipeline not configured"},
                                status_code=503)
        body = await request.json()
        for fld in ("query", "user_id", "start", "end"):
            if fld not in body:
                return JSONResponse({"error": f"field {fld!r} is required"},
                                    status_code=422)
        rng = TimeRange(parse_instant(body["start"], store.tz),
                        parse_instant(body["end"], store.tz))
        try:
            answer = rag.answer(body["query"], body["user_id"], rng, body.get("k"))
        except LlmError as exc:
            return JSONResponse({"error": f"backend failure: {exc}"},
                                status_code=502)
        return answer.to_dict()

    @app.post("/eval/corpus")
    async def eval_corpus(request: Request):
        body = await request.json()
        specs = [QuerySpec.from_dict(item, store.tz)
                 for item in body.get("corpus", [])]
        if not specs:
            return JSONResponse({"error": "corpus is empty"}, status_code=422)
        systems = body.get("systems", ["engine"])
        runners = {}
        if "engine" in systems:
            runners["engine"] = lambda spec: manager.engine.run(
                spec.text, spec.presentation_instructions).answer.text
        if "rag" in systems and rag is not None:
            runners["rag"] = lambda spec: rag.answer(
                spec.text, spec.user_id, spec.range).text
        outcomes = run_corpus(specs, runners,
                              repetitions=body.get("repetitions", 3))
        labels = {(item["query_id"], item["system"]): item["label"]
                  for item in body.get("labels", [])}
        if labels:
            apply_labels(outcomes, labels)
        eval_state["outcomes"] = outcomes
        return {"outcomes": [o.to_dict() for o in outcomes]}

    @app.get("/eval/report")
    def eval_report():
        if not eval_state["outcomes"]:
            return JSONResponse({"error": "no evaluation has been run"},
                                status_code=404)
        return build_report(eval_state["outcomes"], eval_state["ratings"])

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app

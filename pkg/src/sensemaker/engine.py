"""The sensemaking state machine: plan, seek/fulfill/summarize/refine loop, present.

`run()` is literally a `step()` loop, so the two entry points cannot
diverge. Every phase transition and every agent call emits one trace event;
the trace is what the service streams and the UI renders.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .agents import (
    Agents,
    AgentConfig,
    Answer,
    MemoryEntry,
    Understanding,
    VERDICT_ANSWERED,
    VERDICT_CONTINUE,
    VERDICT_FAILURE,
)
from .helpers import HelperRegistry, build_default_registry
from .llm import Backend
from .store import SensorStore


class RunStatus(str, Enum):
    PENDING = "pending"
    PLANNING = "planning"
    SEEKING = "seeking"
    EXECUTING = "executing"
    LOCAL_SENSE = "local_sense"
    GLOBAL_SENSE = "global_sense"
    DECIDING = "deciding"
    ANSWERED = "answered"
    UNANSWERABLE = "unanswerable"
    HALTED_FAILURE = "halted_failure"
    CUTOFF = "cutoff"


TERMINAL_STATUSES = frozenset({
    RunStatus.ANSWERED, RunStatus.UNANSWERABLE,
    RunStatus.HALTED_FAILURE, RunStatus.CUTOFF,
})


class TerminalStateError(Exception):
    pass


class EngineRunError(Exception):
    """A run aborted outside the state machine (backend hard failure, etc.)."""

    def __init__(self, message: str, state: "RunState", trace: list["TraceEvent"]):
        super().__init__(message)
        self.state = state
        self.trace = trace


@dataclass
class EngineConfig:
    max_iterations: int = 5  # hard cutoff on the seek/sense loop
    agent: AgentConfig = field(default_factory=AgentConfig)
    sandbox_kind: str = "subprocess"
    display_tz: str = "UTC"


@dataclass
class TraceEvent:
    run_id: str
    seq: int
    phase: str  # a RunStatus value or an agent name
    payload: dict
    wall_time: float

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "seq": self.seq, "phase": self.phase,
                "payload": self.payload, "wall_time": self.wall_time}

    @classmethod
    def from_dict(cls, obj: dict) -> "TraceEvent":
        return cls(obj["run_id"], obj["seq"], obj["phase"], obj["payload"],
                   obj["wall_time"])


@dataclass
class RunState:
    query: str
    presentation_instructions: str
    run_id: str
    max_iterations: int = 5
    plan: Optional[object] = None
    memory: list[MemoryEntry] = field(default_factory=list)
    understanding: Understanding = field(default_factory=Understanding)
    iteration: int = 0
    status: RunStatus = RunStatus.PENDING
    answer: Optional[Answer] = None
    # in-flight data between phases
    current_request: Optional[object] = None
    current_result: Optional[object] = None
    last_decision: Optional[object] = None

    @property
    def terminal(self) -> bool:
        return self.status in TERMINAL_STATUSES

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "presentation_instructions": self.presentation_instructions,
            "run_id": self.run_id,
            "max_iterations": self.max_iterations,
            "plan": self.plan.to_dict() if self.plan else None,
            "memory": [m.to_dict() for m in self.memory],
            "understanding": self.understanding.to_dict(),
            "iteration": self.iteration,
            "status": self.status.value,
            "answer": self.answer.to_dict() if self.answer else None,
        }


@dataclass
class RunResult:
    answer: Answer
    state: RunState
    trace: list[TraceEvent]


class Run:
    """One in-flight run: its state, its trace, and its event fan-out hook."""

    def __init__(self, state: RunState, clock: Callable[[], float],
                 on_event: Optional[Callable[[TraceEvent], None]] = None):
        self.state = state
        self.trace: list[TraceEvent] = []
        self._clock = clock
        self._on_event = on_event

    def emit(self, phase: str, payload: dict) -> TraceEvent:
        event = TraceEvent(self.state.run_id, len(self.trace), phase,
                           payload, self._clock())
        self.trace.append(event)
        if self._on_event is not None:
            self._on_event(event)
        return event


class Engine:
    """Wires the agents, helper registry, store, and sandbox into runs."""

    def __init__(self, backend: Backend, store: SensorStore,
                 registry: Optional[HelperRegistry] = None,
                 config: Optional[EngineConfig] = None,
                 sandbox=None,
                 clock: Callable[[], float] = time.time,
                 run_id_factory: Callable[[], str] = lambda: uuid.uuid4().hex):
        self.config = config or EngineConfig()
        self.store = store
        self.registry = registry if registry is not None \
            else build_default_registry(store, tz=self.config.display_tz)
        if sandbox is None:
            from .sandbox import create_sandbox
            sandbox = create_sandbox(self.config.sandbox_kind)
        self.sandbox = sandbox
        self.agents = Agents(backend, self.registry, sandbox=sandbox,
                             config=self.config.agent)
        self.clock = clock
        self.run_id_factory = run_id_factory

    # -- lifecycle ---------------------------------------------------------

    def start(self, query: str, instructions: str = "",
              on_event: Optional[Callable[[TraceEvent], None]] = None,
              run_id: Optional[str] = None,
              max_iterations: Optional[int] = None) -> Run:
        state = RunState(query=query, presentation_instructions=instructions,
                         run_id=run_id or self.run_id_factory(),
                         max_iterations=max_iterations
                         if max_iterations is not None
                         else self.config.max_iterations)
        run = Run(state, self.clock, on_event)
        run.emit(RunStatus.PENDING.value, {"status": RunStatus.PENDING.value,
                                           "query": query,
                                           "instructions": instructions})
        return run

    def run(self, query: str, instructions: str = "",
            on_event: Optional[Callable[[TraceEvent], None]] = None,
            run_id: Optional[str] = None,
            max_iterations: Optional[int] = None) -> RunResult:
        """Run to termination; exactly one answer is always produced."""
        run = self.start(query, instructions, on_event, run_id, max_iterations)
        try:
            while not run.state.terminal:
                self.step(run)
        except (TerminalStateError, EngineRunError):
            raise
        except Exception as exc:
            run.emit("error", {"message": str(exc), "type": type(exc).__name__})
            raise EngineRunError(str(exc), run.state, run.trace) from exc
        return RunResult(run.state.answer, run.state, run.trace)

    # -- the state machine ---------------------------------------------------

    def step(self, run: Run) -> Run:
        """Advance exactly one phase of the sensemaking machine."""
        state = run.state
        if state.terminal:
            raise TerminalStateError(f"run {state.run_id} is already terminal "
                                     f"({state.status.value})")
        handler = {
            RunStatus.PENDING: self._step_pending,
            RunStatus.PLANNING: self._step_planning,
            RunStatus.DECIDING: self._step_deciding,
            RunStatus.SEEKING: self._step_seeking,
            RunStatus.EXECUTING: self._step_executing,
            RunStatus.LOCAL_SENSE: self._step_local_sense,
            RunStatus.GLOBAL_SENSE: self._step_global_sense,
        }[state.status]
        handler(run)
        return run

    def _enter(self, run: Run, status: RunStatus, **extra) -> None:
        run.state.status = status
        payload = {"status": status.value, "iteration": run.state.iteration}
        payload.update(extra)
        run.emit(status.value, payload)

    def _finish(self, run: Run, status: RunStatus, answer: Answer) -> None:
        run.state.answer = answer
        run.state.status = status
        run.emit(status.value, {"status": status.value,
                                "iteration": run.state.iteration,
                                "answer": answer.to_dict()})

    def _step_pending(self, run: Run) -> None:
        self._enter(run, RunStatus.PLANNING)

    def _step_planning(self, run: Run) -> None:
        state = run.state
        plan = self.agents.plan(state.query)
        state.plan = plan
        run.emit("action_plan", {"output": plan.to_dict()})
        if not plan.answerable:
            # The plan's rationale names the uncovered data; no seeking, no
            # sandbox executions, and the answer conveys that rationale.
            answer = Answer(plan.rationale, state.presentation_instructions)
            run.emit("presentation", {"output": answer.to_dict(),
                                      "derived_from": "plan_rationale"})
            self._finish(run, RunStatus.UNANSWERABLE, answer)
            return
        self._enter(run, RunStatus.DECIDING)

    def _step_deciding(self, run: Run) -> None:
        state = run.state
        decision = self.agents.decide_next(
            state.query, state.plan, state.understanding,
            state.iteration, state.max_iterations)
        state.last_decision = decision
        run.emit("next_step", {"output": decision.to_dict()})
        if decision.verdict == VERDICT_CONTINUE:
            self._enter(run, RunStatus.SEEKING)
            return
        if decision.verdict == VERDICT_ANSWERED:
            answer = self.agents.present(
                state.query, state.understanding, state.presentation_instructions)
            run.emit("presentation", {"output": answer.to_dict(),
                                      "derived_from": "understanding"})
            self._finish(run, RunStatus.ANSWERED, answer)
            return
        if decision.verdict == VERDICT_FAILURE:
            answer = self.agents.present(
                state.query, state.understanding, state.presentation_instructions,
                status_note=("data retrieval failed or required data is missing; "
                             "explain the gap instead of answering"))
            run.emit("presentation", {"output": answer.to_dict(),
                                      "derived_from": "understanding"})
            self._finish(run, RunStatus.HALTED_FAILURE, answer)
            return
        raise EngineRunError(f"unknown verdict {decision.verdict!r}",
                             state, run.trace)

    def _step_seeking(self, run: Run) -> None:
        state = run.state
        request = self.agents.seek(state.query, state.plan, state.memory,
                                   state.understanding)
        state.current_request = request
        run.emit("information_seeking", {"output": request.to_dict()})
        self._enter(run, RunStatus.EXECUTING)

    def _step_executing(self, run: Run) -> None:
        state = run.state
        result = self.agents.fulfill(state.current_request)
        state.current_result = result
        for i, attempt in enumerate(result.attempts, start=1):
            run.emit("code_generation", {"attempt": i,
                                         "output": attempt.to_dict()})
        summary = result.to_dict()
        summary["value"] = None if result.value is None \
            else result.value_text()[: self.config.agent.raw_digest_limit]
        run.emit("data_manager", {"output": summary})
        self._enter(run, RunStatus.LOCAL_SENSE)

    def _step_local_sense(self, run: Run) -> None:
        state = run.state
        request, result = state.current_request, state.current_result
        if result.ok:
            summary = self.agents.summarize_local(request, result)
        else:
            # A failure result becomes a failed memory entry verbatim; there
            # is nothing to summarize.
            summary = result.failure
        entry = MemoryEntry(
            request=request, summary=summary,
            raw_digest=result.value_text()[: self.config.agent.raw_digest_limit],
            failed=not result.ok)
        state.memory.append(entry)
        run.emit("local_sensemaking", {"output": {"summary": summary,
                                                  "failed": entry.failed,
                                                  "request": request.to_dict()}})
        self._enter(run, RunStatus.GLOBAL_SENSE)

    def _step_global_sense(self, run: Run) -> None:
        state = run.state
        understanding = self.agents.update_understanding(
            state.query, state.plan, state.understanding, state.memory)
        state.understanding = understanding
        run.emit("global_sensemaking", {"output": understanding.to_dict()})
        state.iteration += 1
        if state.iteration >= state.max_iterations:
            answer = self.agents.present(
                state.query, state.understanding, state.presentation_instructions,
                status_note=(f"the iteration limit of {state.max_iterations} was "
                             "reached; answer from the latest understanding"))
            run.emit("presentation", {"output": answer.to_dict(),
                                      "derived_from": "understanding"})
            self._finish(run, RunStatus.CUTOFF, answer)
            return
        self._enter(run, RunStatus.DECIDING)

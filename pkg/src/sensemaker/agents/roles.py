"""The agent roles of the sensemaking loop.

Each operation renders a prompt template, runs one completion against the
configured backend, and parses the reply into a validated structured output.
Replies that fail to parse earn exactly one re-ask with appended format
instructions; a second failure raises AgentParseError. All state flows
through parameters, so agents are safe to share across concurrent runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from ..helpers import HelperRegistry, streams_mentioned
from ..llm import Backend, ChatMessage, ChatRequest
from ..streams import describe_databases
from ..textnum import ungrounded_tokens
from .outputs import (
    ActionPlan,
    AgentParseError,
    AgentValidationError,
    Answer,
    BlockNotFound,
    InformationRequest,
    MemoryEntry,
    NextStepDecision,
    Understanding,
    VERDICT_CONTINUE,
    VERDICT_FAILURE,
    extract_program,
)
from .prompts import render_memory, render_plan, render_template, render_understanding


@dataclass
class AgentConfig:
    model: str = "gpt-4o"
    temperature: float = 1.0
    top_p: float = 1.0
    memory_char_budget: int = 4000
    raw_digest_limit: int = 8000
    codegen_attempts: int = 3
    guest_language: str = "python"


@dataclass
class CodeAttempt:
    program: str
    ok: bool
    error: Optional[str] = None
    duration: float = 0.0
    exit_status: Optional[int] = None

    def to_dict(self) -> dict:
        # duration is deliberately left out: trace payloads must be
        # bit-stable across replays of the same cassette.
        return {"program": self.program, "ok": self.ok, "error": self.error,
                "exit_status": self.exit_status}


@dataclass
class FulfillmentResult:
    """Outcome of one information request: a value, or a described failure."""

    ok: bool
    value: object = None
    failure: Optional[str] = None
    attempts: list[CodeAttempt] = field(default_factory=list)
    helper_names: list[str] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return self.ok and (self.value is None or self.value == [] or self.value == {})

    def value_text(self) -> str:
        if not self.ok:
            return f"FAILURE: {self.failure}"
        return json.dumps(self.value, sort_keys=True)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "value": self.value, "failure": self.failure,
                "attempts": [a.to_dict() for a in self.attempts],
                "helper_names": list(self.helper_names)}


class Agents:
    """Prompt templates + completion calls + validated parses, one per role."""

    def __init__(self, backend: Backend, registry: HelperRegistry,
                 sandbox=None, config: Optional[AgentConfig] = None,
                 databases_text: Optional[str] = None):
        self.backend = backend
        self.registry = registry
        self.sandbox = sandbox
        self.config = config or AgentConfig()
        self.databases_text = databases_text or describe_databases()

    # -- plumbing ----------------------------------------------------------

    def _request(self, messages: list[ChatMessage]) -> ChatRequest:
        cfg = self.config
        return ChatRequest(cfg.model, tuple(messages), cfg.temperature, cfg.top_p)

    def _complete(self, prompt: str) -> str:
        return self.backend.complete(self._request([ChatMessage("user", prompt)]))

    def _ask_structured(self, prompt: str, fmt: str, parse: Callable[[str], object]):
        """One completion, one structured re-ask on parse failure, then error."""
        full = f"{prompt}\n\n{fmt}"
        first = self._complete(full)
        try:
            return parse(first)
        except BlockNotFound as exc:
            correction = (f"Your previous reply could not be parsed: {exc}. "
                          f"{fmt} Reply again with only the fenced block.")
            second = self.backend.complete(self._request([
                ChatMessage("user", full),
                ChatMessage("assistant", first or "(empty)"),
                ChatMessage("user", correction),
            ]))
            try:
                return parse(second)
            except BlockNotFound as exc2:
                raise AgentParseError(
                    f"unparseable completion after re-ask: {exc2}") from exc2

    # -- roles -------------------------------------------------------------

    def plan(self, query: str) -> ActionPlan:
        prompt = render_template("plan", query=query, databases=self.databases_text)
        return self._ask_structured(prompt, ActionPlan.FORMAT, ActionPlan.parse)

    def decide_next(self, query: str, plan: ActionPlan, understanding: Understanding,
                    iteration: int, max_iterations: int) -> NextStepDecision:
        """Continue/halt decision; two cases never consult the model.

        An empty understanding cannot answer anything, so the first iteration
        always continues; a recorded fetch failure or data gap always halts.
        """
        if understanding.is_empty:
            return NextStepDecision(
                VERDICT_CONTINUE,
                "the understanding is empty and cannot answer the query yet")
        if understanding.failure_note:
            return NextStepDecision(
                VERDICT_FAILURE,
                f"data could not be fetched: {understanding.failure_note}")
        prompt = render_template(
            "next_step", query=query, plan=render_plan(plan),
            understanding=render_understanding(understanding),
            iteration=str(iteration), max_iterations=str(max_iterations))
        return self._ask_structured(prompt, NextStepDecision.FORMAT,
                                    NextStepDecision.parse)

    def seek(self, query: str, plan: ActionPlan, memory: list[MemoryEntry],
             understanding: Understanding) -> InformationRequest:
        prompt = render_template(
            "seek", query=query, plan=render_plan(plan),
            memory=render_memory(memory, self.config.memory_char_budget),
            understanding=render_understanding(understanding),
            databases=self.databases_text)
        request: InformationRequest = self._ask_structured(
            prompt, InformationRequest.FORMAT, InformationRequest.parse)
        if not request.target_streams:
            request.target_streams = streams_mentioned(request.text)
        normalized = " ".join(request.text.split()).casefold()
        request.repeat = any(
            " ".join(entry.request.text.split()).casefold() == normalized
            for entry in memory)
        return request

    def generate_code(self, request_text: str, helper_specs_text: str,
                      prior_error: Optional[str] = None) -> str:
        if prior_error:
            prior_section = ("\nYour previous program failed with this error; "
                             "fix it:\n" + prior_error + "\n")
        else:
            prior_section = ""
        prompt = render_template(
            "generate_code", request=request_text, helper_specs=helper_specs_text,
            language=self.config.guest_language, prior_error_section=prior_section)
        fmt = (f"Reply with exactly one fenced block tagged "
               f"{self.config.guest_language} holding the complete program.")
        return self._ask_structured(
            prompt, fmt, lambda text: extract_program(text, self.config.guest_language))

    def fulfill(self, request: InformationRequest) -> FulfillmentResult:
        """Data-manager pipeline: select helpers, generate code, run, retry.

        Failures come back as a described result (never an exception) so the
        loop can fold them into the understanding.
        """
        from ..sandbox import ExecutionRequest  # local: avoids cycle at import time

        selection = self.registry.select_relevant(
            request.text, extra_streams=request.target_streams)
        if not selection:
            return FulfillmentResult(
                ok=False,
                failure=("no relevant helpers: none of the available databases "
                         f"cover the request {request.text!r}"))
        specs_text = self.registry.describe(selection.names)
        allowed = frozenset(selection.names)
        attempts: list[CodeAttempt] = []
        prior_error: Optional[str] = None
        for _ in range(self.config.codegen_attempts):
            try:
                program = self.generate_code(request.text, specs_text, prior_error)
            except AgentParseError as exc:
                return FulfillmentResult(
                    ok=False, failure=f"code generation failed: {exc}",
                    attempts=attempts, helper_names=selection.names)
            execution = self.sandbox.execute(
                ExecutionRequest(program=program, allowed_helpers=allowed),
                self.registry)
            if execution.ok and execution.has_result:
                attempts.append(CodeAttempt(program, True,
                                            duration=execution.duration,
                                            exit_status=execution.exit_status))
                value = execution.result_value
                if value is None or value == [] or value == {}:
                    # empty data is not a program error: no retry will
                    # create records, so report the gap as a failure result
                    return FulfillmentResult(
                        ok=False,
                        failure=(f"no records: the request {request.text!r} "
                                 "returned no data"),
                        attempts=attempts, helper_names=selection.names)
                return FulfillmentResult(ok=True, value=value,
                                         attempts=attempts,
                                         helper_names=selection.names)
            error = execution.error_text() if not execution.ok \
                else "program completed but printed no result block; call emit_result(value)"
            attempts.append(CodeAttempt(program, False, error=error,
                                        duration=execution.duration,
                                        exit_status=execution.exit_status))
            prior_error = error
        return FulfillmentResult(
            ok=False,
            failure=(f"code execution failed after {len(attempts)} attempts; "
                     f"last error: {prior_error}"),
            attempts=attempts, helper_names=selection.names)

    def summarize_local(self, request: InformationRequest,
                        result: FulfillmentResult) -> str:
        """Natural-language rendering of a structured result.

        Every number in the summary must be grounded in the structured result
        or the request text; an ungrounded number earns one corrective
        re-ask, then AgentValidationError.
        """
        result_text = result.value_text()
        source = result_text + "\n" + request.text
        prompt = render_template("summarize", request=request.text,
                                 result=result_text)
        summary = self._complete(prompt).strip()
        invented = ungrounded_tokens(summary, source)
        if not invented and summary:
            return summary
        correction = (
            f"{prompt}\n\nYour previous summary was rejected because it "
            f"mentions numbers that do not occur in the structured result or "
            f"the request: {', '.join(invented) or '(empty reply)'}. Rewrite "
            f"the summary using only values present in the result.")
        summary = self.backend.complete(self._request([
            ChatMessage("user", correction)])).strip()
        invented = ungrounded_tokens(summary, source)
        if invented or not summary:
            raise AgentValidationError(
                f"summary still contains ungrounded numbers: {invented}")
        return summary

    def update_understanding(self, query: str, plan: ActionPlan,
                             previous: Understanding,
                             memory: list[MemoryEntry]) -> Understanding:
        if not memory:
            raise ValueError("update_understanding requires at least one memory entry")
        prompt = render_template(
            "update_understanding", query=query, plan=render_plan(plan),
            memory=render_memory(memory, self.config.memory_char_budget),
            previous_understanding=render_understanding(previous),
            databases=self.databases_text)
        understanding: Understanding = self._ask_structured(
            prompt, Understanding.FORMAT, Understanding.parse)
        newest = memory[-1]
        if newest.failed and not understanding.failure_note:
            understanding.failure_note = newest.summary
        return understanding

    def present(self, query: str, understanding: Understanding, instructions: str,
                status_note: str = "") -> Answer:
        note = f"\nNote: {status_note}\n" if status_note else ""
        prompt = render_template(
            "present", query=query,
            understanding=render_understanding(understanding),
            instructions=instructions or "answer clearly and concisely",
            status_note=note)
        text = self._complete(prompt).strip()
        if not text:
            raise AgentParseError("presentation completion was empty")
        return Answer(text, instructions)

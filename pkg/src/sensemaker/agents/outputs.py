"""Structured agent outputs and the fenced-block reply grammar.

Agents that produce structured data must answer with exactly one fenced
block tagged ``json`` holding an object with the fields listed per type
below; code generation answers with a fenced block tagged with the guest
language. Prose agents (result summarization, presentation) answer in plain
text. A malformed reply earns one re-ask with explicit format instructions,
then a hard parse error.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

from ..streams import StreamKind


class AgentParseError(Exception):
    """A completion could not be parsed even after the structured re-ask."""


class AgentValidationError(Exception):
    """A parsed output violated a content check (e.g. ungrounded numbers)."""


class BlockNotFound(ValueError):
    pass


_FENCE_RE_CACHE: dict[str, re.Pattern] = {}


def extract_block(text: str, tag: str) -> str:
    """Contents of the last fenced block tagged `tag`; raises BlockNotFound."""
    rx = _FENCE_RE_CACHE.get(tag)
    if rx is None:
        rx = re.compile(rf"```{re.escape(tag)}\s*\n(.*?)```", re.DOTALL)
        _FENCE_RE_CACHE[tag] = rx
    matches = rx.findall(text)
    if not matches:
        raise BlockNotFound(f"no fenced ```{tag} block in completion")
    return matches[-1].strip()


def extract_json_object(text: str) -> dict:
    blob = extract_block(text, "json")
    try:
        obj = json.loads(blob)
    except json.JSONDecodeError as exc:
        raise BlockNotFound(f"fenced json block is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise BlockNotFound("fenced json block must hold an object")
    return obj


def extract_program(text: str, language: str) -> str:
    return extract_block(text, language)


def _string_list(obj: dict, key: str) -> list[str]:
    value = obj.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise BlockNotFound(f"field {key!r} must be a list of strings")
    return value


# -- output types ------------------------------------------------------------


@dataclass
class ActionPlan:
    """High-level step strategy; unanswerable plans explain the data gap."""

    answerable: bool
    steps: list[str]
    rationale: str

    def __post_init__(self):
        if not self.answerable and self.steps:
            raise ValueError("an unanswerable plan must have no steps")
        if self.answerable and not self.steps:
            raise ValueError("an answerable plan needs at least one step")

    def to_dict(self) -> dict:
        return {"answerable": self.answerable, "steps": list(self.steps),
                "rationale": self.rationale}

    @classmethod
    def parse(cls, completion: str) -> "ActionPlan":
        obj = extract_json_object(completion)
        if "answerable" not in obj or not isinstance(obj["answerable"], bool):
            raise BlockNotFound("field 'answerable' (boolean) is required")
        rationale = obj.get("rationale", "")
        if not isinstance(rationale, str) or not rationale.strip():
            raise BlockNotFound("field 'rationale' (non-empty string) is required")
        steps = _string_list(obj, "steps")
        try:
            return cls(obj["answerable"], steps, rationale.strip())
        except ValueError as exc:
            raise BlockNotFound(str(exc)) from None

    FORMAT = (
        'Reply with exactly one fenced block tagged json holding an object '
        'with fields: "answerable" (boolean), "steps" (list of strings; empty '
        'when answerable is false), "rationale" (string; when answerable is '
        'false, name which requested data no database covers).')


VERDICT_CONTINUE = "continue"
VERDICT_ANSWERED = "halt_answered"
VERDICT_FAILURE = "halt_failure"


@dataclass
class NextStepDecision:
    verdict: str
    reason: str

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reason": self.reason}

    @classmethod
    def parse(cls, completion: str) -> "NextStepDecision":
        obj = extract_json_object(completion)
        verdict = obj.get("verdict")
        # halt_failure is never model-chosen: it is derived from a recorded
        # failure note before the model is consulted.
        if verdict not in (VERDICT_CONTINUE, VERDICT_ANSWERED):
            raise BlockNotFound(
                "field 'verdict' must be 'continue' or 'halt_answered'")
        reason = obj.get("reason", "")
        if not isinstance(reason, str):
            raise BlockNotFound("field 'reason' must be a string")
        return cls(verdict, reason.strip())

    FORMAT = (
        'Reply with exactly one fenced block tagged json holding an object '
        'with fields: "verdict" (either "continue" or "halt_answered") and '
        '"reason" (string).')


@dataclass
class InformationRequest:
    """One concrete data retrieval/processing demand issued inside the loop."""

    text: str
    target_streams: set[StreamKind] = field(default_factory=set)
    repeat: bool = False

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("information request text must be non-empty")

    def to_dict(self) -> dict:
        return {"text": self.text,
                "target_streams": sorted(s.value for s in self.target_streams),
                "repeat": self.repeat}

    @classmethod
    def parse(cls, completion: str) -> "InformationRequest":
        obj = extract_json_object(completion)
        text = obj.get("request", "")
        if not isinstance(text, str) or not text.strip():
            raise BlockNotFound("field 'request' (non-empty string) is required")
        streams: set[StreamKind] = set()
        for name in _string_list(obj, "streams"):
            try:
                streams.add(StreamKind(name))
            except ValueError:
                raise BlockNotFound(f"unknown stream name {name!r} in 'streams'") from None
        return cls(text.strip(), streams)

    FORMAT = (
        'Reply with exactly one fenced block tagged json holding an object '
        'with fields: "request" (string: the data retrieval request) and '
        'optionally "streams" (list of stream names, from: '
        + ", ".join(k.value for k in StreamKind) + ").")


@dataclass
class Understanding:
    """The evolving interpretation, noted gaps, and any recorded fetch failure."""

    narrative: str = ""
    needs: list[str] = field(default_factory=list)
    failure_note: Optional[str] = None

    @property
    def is_empty(self) -> bool:
        return not self.narrative.strip()

    def to_dict(self) -> dict:
        return {"narrative": self.narrative, "needs": list(self.needs),
                "failure_note": self.failure_note}

    @classmethod
    def parse(cls, completion: str) -> "Understanding":
        obj = extract_json_object(completion)
        narrative = obj.get("narrative", "")
        if not isinstance(narrative, str) or not narrative.strip():
            raise BlockNotFound("field 'narrative' (non-empty string) is required")
        needs = _string_list(obj, "needs")
        note = obj.get("failure_note")
        if note is not None and not isinstance(note, str):
            raise BlockNotFound("field 'failure_note' must be a string or null")
        if isinstance(note, str) and not note.strip():
            note = None
        return cls(narrative.strip(), needs, note)

    FORMAT = (
        'Reply with exactly one fenced block tagged json holding an object '
        'with fields: "narrative" (string: the refined interpretation built '
        'strictly from the findings), "needs" (list of strings: additional '
        'data that would strengthen it; may be empty), "failure_note" '
        '(string naming the affected stream or request if data could not be '
        'fetched or was missing; otherwise null).')


@dataclass
class MemoryEntry:
    """One (information request, natural-language result) pair; append-only."""

    request: InformationRequest
    summary: str
    raw_digest: str
    failed: bool = False

    def __post_init__(self):
        if not self.summary.strip():
            raise ValueError("memory entry summary must be non-empty")

    def to_dict(self) -> dict:
        return {"request": self.request.to_dict(), "summary": self.summary,
                "raw_digest": self.raw_digest, "failed": self.failed}


@dataclass
class Answer:
    """The final text presented to the caller, plus the instructions it honored."""

    text: str
    presentation_instructions: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("answer text must be non-empty")

    def to_dict(self) -> dict:
        return {"text": self.text,
                "presentation_instructions": self.presentation_instructions}

"""Loading of the named-slot prompt templates and rendering of shared slots."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from .outputs import ActionPlan, MemoryEntry, Understanding


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return (resources.files(__package__) / "templates" / f"{name}.txt").read_text()


def render_template(name: str, **slots: str) -> str:
    return load_template(name).format(**slots)


def render_plan(plan: ActionPlan) -> str:
    lines = [f"{i}. {step}" for i, step in enumerate(plan.steps, start=1)]
    lines.append(f"Rationale: {plan.rationale}")
    return "\n".join(lines)


def render_understanding(understanding: Understanding) -> str:
    if understanding.is_empty:
        return "(empty: nothing has been established yet)"
    parts = [understanding.narrative]
    if understanding.needs:
        parts.append("Additional data that would help: " + "; ".join(understanding.needs))
    if understanding.failure_note:
        parts.append(f"Recorded failure: {understanding.failure_note}")
    return "\n".join(parts)


def render_memory(memory: list[MemoryEntry], char_budget: int = 4000) -> str:
    """Memory entries as numbered request/findings pairs, truncated per entry.

    Raw structured results never reach the model: only the natural-language
    summary, capped at `char_budget` characters per entry.
    """
    if not memory:
        return "(empty)"
    blocks = []
    for i, entry in enumerate(memory, start=1):
        summary = entry.summary
        if len(summary) > char_budget:
            summary = summary[:char_budget] + " ...[truncated]"
        status = " [FAILED]" if entry.failed else ""
        blocks.append(f"{i}. Request: {entry.request.text}\n"
                      f"   Findings{status}: {summary}")
    return "\n".join(blocks)

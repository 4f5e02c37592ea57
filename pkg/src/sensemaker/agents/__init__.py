"""Agent roles, structured outputs, and prompt templates."""

from .outputs import (
    ActionPlan,
    AgentParseError,
    AgentValidationError,
    Answer,
    InformationRequest,
    MemoryEntry,
    NextStepDecision,
    Understanding,
    VERDICT_ANSWERED,
    VERDICT_CONTINUE,
    VERDICT_FAILURE,
)
from .roles import AgentConfig, Agents, CodeAttempt, FulfillmentResult

__all__ = [
    "ActionPlan", "AgentConfig", "AgentParseError", "AgentValidationError",
    "Agents", "Answer", "CodeAttempt", "FulfillmentResult",
    "InformationRequest", "MemoryEntry", "NextStepDecision", "Understanding",
    "VERDICT_ANSWERED", "VERDICT_CONTINUE", "VERDICT_FAILURE",
]

"""Dynamic draft-augmented reasoning: hub planning, one-thought-per-call iteration
with tool-drawn drafts, and a final answer call."""

from grassland.d2r.loop import (
    EpisodeResult,
    LoopOptions,
    Plan,
    StopReason,
    ThoughtStep,
    ToolId,
    Transcript,
    finalize,
    iterate,
    persist_episode,
    plan,
    run_batch,
    run_episode,
)
from grassland.d2r.reasoners import (
    OracleReasoner,
    Reasoner,
    RemoteReasoner,
    Request,
    RuleHub,
    ScriptedReasoner,
    to_wire,
)

__all__ = [
    "EpisodeResult",
    "LoopOptions",
    "OracleReasoner",
    "Plan",
    "Reasoner",
    "RemoteReasoner",
    "Request",
    "RuleHub",
    "ScriptedReasoner",
    "StopReason",
    "ThoughtStep",
    "ToolId",
    "Transcript",
    "finalize",
    "iterate",
    "persist_episode",
    "plan",
    "run_batch",
    "run_episode",
    "to_wire",
]

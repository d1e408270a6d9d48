"""Plan, iterate, answer: the draft-augmented reasoning loop and episode runner."""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

from grassland.errors import ContractViolation, GrasslandError
from grassland.generator import Instance, Task
from grassland.prompts import (
    CAN_NOT_PASS,
    FINISH_TOKEN,
    Method,
    ParsedAnswer,
    PromptBundle,
    PromptOptions,
    TextPart,
    Thought,
    build,
    build_manager_decision,
    default_frame_count,
    instruction,
    parse_answer,
    parse_step_action,
)
from grassland.render import DEFAULT_CELL_PX, Frame, PathLine, PositionMark, encode_png, render_frame, render_video
from grassland.world import Action, Coord, neighbor

from grassland.d2r.reasoners import Reasoner, Request, count_words

log = logging.getLogger(__name__)

MLLM_MAX_TOKENS = 700
HUB_MAX_TOKENS = 400
HUB_TEMPERATURE = 0.1
MLLM_TEMPERATURE = 0.0

SINGLE_CALL_METHODS = ("direct", "cot", "oneshot", "draftcot-gt")
RUN_METHODS = SINGLE_CALL_METHODS + ("d2r",)


class ToolId(str, Enum):
    VIDEO_PROCESSING = "VideoProcessing"
    POSITION_GET = "PositionGet"
    DRAW_POSITION = "DrawPosition"
    MLLM_REPLY = "MLLMReply"


class StopReason(str, Enum):
    FINISH = "finish"
    MAX_ITERATIONS = "max_iterations"
    HUB_STOP = "hub_stop"
    ERROR = "error"


def default_max_iterations(step_limit: int) -> int:
    # Every action may need a <can_not_pass> retry, plus slack for the answer.
    return 2 * step_limit + 4


@dataclass(frozen=True)
class Plan:
    steps: tuple[ToolId, ...]
    loop_start: int
    finish_token: str = FINISH_TOKEN
    max_iterations: int = 16
    fallback: bool = False

    def uses(self, tool: ToolId) -> bool:
        return tool in self.steps


CANONICAL_STEPS = (ToolId.VIDEO_PROCESSING, ToolId.POSITION_GET, ToolId.DRAW_POSITION, ToolId.MLLM_REPLY)
_TOOL_RE = re.compile("|".join(t.value for t in ToolId))


def parse_plan(text: str) -> tuple[ToolId, ...] | None:
    """Tool order up to and including the first MLLMReply, or None if absent."""
    found = [ToolId(m.group(0)) for m in _TOOL_RE.finditer(text or "")]
    if ToolId.MLLM_REPLY not in found:
        return None
    return tuple(found[:found.index(ToolId.MLLM_REPLY) + 1])


@dataclass(frozen=True)
class ThoughtStep:
    index: int
    text: str
    draft: Frame | None
    tool_used: ToolId
    tracked_pos: Coord
    tick: int
    action: Action | None = None
    blocked: bool = False


@dataclass(frozen=True)
class CallRecord:
    stage: str
    prompt: str
    reply: str
    base_frames: int
    image_parts: int
    prior_texts: int
    prior_drafts: int
    words_in: int
    words_out: int


@dataclass
class Transcript:
    instruction: str
    frames: tuple[Frame, ...]
    plan: Plan | None = None
    steps: list[ThoughtStep] = field(default_factory=list)
    answer: ParsedAnswer | None = None
    stop_reason: StopReason | None = None
    calls: list[CallRecord] = field(default_factory=list)
    final_answer: ParsedAnswer | None = None
    error: str | None = None


@dataclass(frozen=True)
class LoopOptions:
    cell_px: int = DEFAULT_CELL_PX
    frames: int | None = None
    base_frames: tuple[Frame, ...] | None = None
    max_iterations: int | None = None
    no_text: bool = False  # drop prior thought texts from the context
    no_draft: bool = False  # drop draft images from the context

    def prompt_options(self, thoughts: tuple[Thought, ...] = ()) -> PromptOptions:
        return PromptOptions(
            cell_px=self.cell_px, frames=self.frames, base_frames=self.base_frames, thoughts=thoughts
        )


def _call(
    reasoner: Reasoner,
    bundle: PromptBundle,
    stage: str,
    instance: Instance,
    transcript: Transcript | None,
    history: Sequence[str] = (),
    hub: bool = False,
) -> str:
    request = Request(
        system=bundle.system,
        parts=bundle.parts,
        max_tokens=HUB_MAX_TOKENS if hub else MLLM_MAX_TOKENS,
        temperature=HUB_TEMPERATURE if hub else MLLM_TEMPERATURE,
        meta={"instance_id": instance.id, "stage": stage, "task": instance.task.value, "history": tuple(history)},
    )
    reply = reasoner.complete(request)
    if transcript is not None:
        images = bundle.images()
        words_in, _ = count_words(bundle.parts, bundle.system)
        transcript.calls.append(
            CallRecord(
                stage=stage,
                prompt=bundle.full_text(),
                reply=reply,
                base_frames=sum(1 for p in images if p.label.startswith("frame_")),
                image_parts=len(images),
                prior_texts=sum(1 for p in bundle.parts if isinstance(p, TextPart) and p.text.startswith("<visualization")),
                prior_drafts=sum(1 for p in images if p.label.startswith("draft_")),
                words_in=words_in,
                words_out=len(reply.split()),
            )
        )
    return reply


def plan(hub: Reasoner, instance: Instance, transcript: Transcript | None = None, max_iterations: int | None = None) -> Plan:
    """Ask the hub for a tool order; fall back to the canonical order if unparseable."""
    bundle = build(Method.D2R_MANAGER, instance.task, instance)
    reply = _call(hub, bundle, "plan", instance, transcript, hub=True)
    steps = parse_plan(reply)
    limit = max_iterations or default_max_iterations(instance.step_limit)
    if steps is None:
        return Plan(CANONICAL_STEPS, 1, max_iterations=limit, fallback=True)
    loop_start = 1 if steps[0] is ToolId.VIDEO_PROCESSING else 0
    return Plan(steps, loop_start, max_iterations=limit)


def _context(steps: Sequence[ThoughtStep], options: LoopOptions) -> tuple[Thought, ...]:
    return tuple(
        Thought(None if options.no_text else s.text, None if options.no_draft else s.draft) for s in steps
    )


def _draw(instance: Instance, pos: Coord, tick: int, path: Sequence[Coord], cell_px: int) -> Frame:
    overlays: list = []
    if instance.task is Task.JUDGMENT and len(path) > 1:
        overlays.append(PathLine(tuple(path)))
    overlays.append(PositionMark(pos))
    return render_frame(instance.scenario, min(tick, instance.scenario.horizon), overlays, cell_px)


def iterate(
    mllm: Reasoner,
    hub: Reasoner,
    instance: Instance,
    the_plan: Plan,
    options: LoopOptions = LoopOptions(),
    transcript: Transcript | None = None,
) -> Transcript:
    """Query the model one thought at a time until it finishes, the hub stops, or the bound hits."""
    if transcript is None:
        transcript = Transcript(instruction(instance), ())
    if not transcript.frames:
        transcript.frames = tuple(_base_frames(instance, options))
    options = replace(options, base_frames=transcript.frames)
    transcript.plan = the_plan
    world = instance.scenario.world
    tracked = world.start
    path = [tracked]
    ticks = 0
    history: list[str] = []
    drafting = the_plan.uses(ToolId.DRAW_POSITION)

    for n in range(1, the_plan.max_iterations + 1):
        bundle = build(Method.D2R_ITERATION, instance.task, instance, options.prompt_options(_context(transcript.steps, options)))
        reply = _call(mllm, bundle, "iterate", instance, transcript, history)
        history.append(reply)

        if the_plan.finish_token in reply:
            transcript.steps.append(ThoughtStep(n, reply, None, ToolId.MLLM_REPLY, tracked, ticks))
            transcript.answer = parse_answer(instance.task, reply)
            transcript.stop_reason = StopReason.FINISH
            return transcript

        action = parse_step_action(reply)
        if action is not None:
            tracked, blocked = neighbor(tracked, action, world)
            ticks += 1
            path.append(tracked)
            text = reply
            if blocked and CAN_NOT_PASS not in text:
                text = f"{text} {CAN_NOT_PASS}"
            draft = _draw(instance, tracked, ticks, path, options.cell_px) if drafting else None
            tool = ToolId.DRAW_POSITION if drafting else ToolId.POSITION_GET
            transcript.steps.append(ThoughtStep(n, text, draft, tool, tracked, ticks, action, blocked))
            continue

        transcript.steps.append(ThoughtStep(n, reply, None, ToolId.MLLM_REPLY, tracked, ticks))
        decision = _call(hub, build_manager_decision(instance.task, reply), "decide", instance, transcript, hub=True)
        if "STOP" in decision.upper() and "CONTINUE" not in decision.upper():
            answer = parse_answer(instance.task, reply)
            transcript.answer = None if answer.empty else answer
            transcript.stop_reason = StopReason.HUB_STOP
            return transcript

    transcript.stop_reason = StopReason.MAX_ITERATIONS
    return transcript


def finalize(mllm: Reasoner, instance: Instance, transcript: Transcript, options: LoopOptions = LoopOptions()) -> ParsedAnswer | None:
    """Answer-forcing call over all thoughts; skipped when the loop already produced an answer."""
    if transcript.answer is not None and not transcript.answer.empty:
        transcript.final_answer = transcript.answer
        return transcript.answer
    options = replace(options, base_frames=transcript.frames or None)
    bundle = build(Method.D2R_FINALIZE, instance.task, instance, options.prompt_options(_context(transcript.steps, options)))
    history = [c.reply for c in transcript.calls if c.stage == "iterate"]
    reply = _call(mllm, bundle, "finalize", instance, transcript, history)
    answer = parse_answer(instance.task, reply)
    transcript.final_answer = None if answer.empty else answer
    return transcript.final_answer


def _base_frames(instance: Instance, options: LoopOptions) -> list[Frame]:
    if options.base_frames is not None:
        return list(options.base_frames)
    return render_video(instance.scenario, options.frames or default_frame_count(instance), cell_px=options.cell_px)


@dataclass
class EpisodeResult:
    instance_id: str
    task: Task
    method: str
    answer: ParsedAnswer | None
    transcript: Transcript | None
    wall_time: float
    token_counts: dict[str, int]
    calls: list[CallRecord] = field(default_factory=list)
    error: str | None = None

    @property
    def errored(self) -> bool:
        return self.error is not None

    def record(self) -> dict[str, Any]:
        """Machine-readable summary (one line of ``results.jsonl``)."""
        ans = self.answer
        return {
            "instance_id": self.instance_id,
            "task": self.task.value,
            "method": self.method,
            "answer": None
            if ans is None
            else {
                "raw": ans.raw,
                "judgment": ans.judgment,
                "navigation": None if ans.navigation is None else [a.value for a in ans.navigation],
            },
            "stop_reason": None if self.transcript is None or self.transcript.stop_reason is None else self.transcript.stop_reason.value,
            "iterations": None if self.transcript is None else len(self.transcript.steps),
            "wall_time": round(self.wall_time, 6),
            "token_counts": self.token_counts,
            "error": self.error,
        }


def _token_counts(calls: Sequence[CallRecord]) -> dict[str, int]:
    return {
        "calls": len(calls),
        "words_in": sum(c.words_in for c in calls),
        "words_out": sum(c.words_out for c in calls),
        "images_in": sum(c.image_parts for c in calls),
    }


def run_episode(
    instance: Instance,
    method: str,
    mllm: Reasoner,
    hub: Reasoner | None = None,
    options: LoopOptions = LoopOptions(),
) -> EpisodeResult:
    """Run one instance; failures become an errored result instead of raising."""
    if method not in RUN_METHODS:
        raise ContractViolation(f"unknown method {method!r}; expected one of {RUN_METHODS}")
    if method == "d2r" and hub is None:
        raise ContractViolation("d2r needs a scheduling hub reasoner")
    t0 = time.perf_counter()
    transcript: Transcript | None = None
    calls: list[CallRecord] = []
    answer = None
    error = None
    try:
        if method == "d2r":
            transcript = Transcript(instruction(instance), tuple(_base_frames(instance, options)))
            the_plan = plan(hub, instance, transcript, options.max_iterations)
            iterate(mllm, hub, instance, the_plan, options, transcript)
            answer = finalize(mllm, instance, transcript, options)
            calls = transcript.calls
        else:
            scratch = Transcript("", ())
            bundle = build(Method(method), instance.task, instance, options.prompt_options())
            reply = _call(mllm, bundle, "single", instance, scratch)
            calls = scratch.calls
            answer = parse_answer(instance.task, reply)
    except GrasslandError as exc:
        error = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # a broken backend must not abort the batch
        log.exception("episode %s crashed", instance.id)
        error = f"{type(exc).__name__}: {exc}"
    if transcript is not None:
        calls = transcript.calls
        if error is not None:
            transcript.error = error
            transcript.stop_reason = transcript.stop_reason or StopReason.ERROR
    return EpisodeResult(
        instance_id=instance.id,
        task=instance.task,
        method=method,
        answer=answer,
        transcript=transcript,
        wall_time=time.perf_counter() - t0,
        token_counts=_token_counts(calls),
        calls=list(calls),
        error=error,
    )


def run_batch(
    instances: Sequence[Instance],
    method: str,
    mllm: Reasoner,
    hub: Reasoner | None = None,
    options: LoopOptions = LoopOptions(),
    parallelism: int = 1,
    frames_for=None,
) -> list[EpisodeResult]:
    """Episodes run concurrently up to ``parallelism``; results keep input order.

    ``frames_for(instance)`` may supply pre-rendered base frames per instance.
    """

    def one(inst: Instance) -> EpisodeResult:
        opts = options if frames_for is None else replace(options, base_frames=tuple(frames_for(inst)))
        return run_episode(inst, method, mllm, hub, opts)

    if parallelism <= 1:
        return [one(i) for i in instances]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, instances))


def persist_episode(result: EpisodeResult, directory: str | Path) -> Path:
    """Write prompts, replies, drafts and ``episode.json`` for audit."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, call in enumerate(result.calls):
        (directory / f"prompt_{i:02d}_{call.stage}.txt").write_text(call.prompt + "\n", encoding="utf-8")
        (directory / f"reply_{i:02d}_{call.stage}.txt").write_text(call.reply + "\n", encoding="utf-8")
    record = result.record()
    transcript = result.transcript
    if transcript is not None:
        steps = []
        for step in transcript.steps:
            draft_file = None
            if step.draft is not None:
                draft_file = f"draft_{step.index:02d}.png"
                (directory / draft_file).write_bytes(encode_png(step.draft))
            steps.append(
                {
                    "index": step.index,
                    "text": step.text,
                    "tool": step.tool_used.value,
                    "tracked_pos": list(step.tracked_pos),
                    "tick": step.tick,
                    "action": None if step.action is None else step.action.value,
                    "blocked": step.blocked,
                    "draft": draft_file,
                }
            )
        record["plan"] = None if transcript.plan is None else {
            "steps": [t.value for t in transcript.plan.steps],
            "loop_start": transcript.plan.loop_start,
            "max_iterations": transcript.plan.max_iterations,
            "fallback": transcript.plan.fallback,
        }
        record["steps"] = steps
    record["calls"] = [
        {k: getattr(c, k) for k in ("stage", "base_frames", "image_parts", "prior_texts", "prior_drafts", "words_in", "words_out")}
        for c in result.calls
    ]
    (directory / "episode.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    return directory

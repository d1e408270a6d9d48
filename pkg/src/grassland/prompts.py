"""Prompt construction for every baseline and D2R stage, plus answer parsing.

Template text lives in ``grassland/templates`` and is reproduced verbatim,
typos included; ``templates/sentinels.json`` lists sentences each built prompt
must contain.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Sequence, Union

from grassland.dynamics import simulate
from grassland.errors import ContractViolation
from grassland.exemplars import exemplar_for
from grassland.generator import Instance, Task
from grassland.render import DEFAULT_CELL_PX, DEFAULT_FRAMES, Frame, PathLine, render_video
from grassland.world import Action, ActionSequence, format_actions

FINISH_TOKEN = "<finish>"
CAN_NOT_PASS = "<can_not_pass>"
THOUGHT_TAG = "<visualization of the thought>"
TOOL_NAMES = ("VideoProcessing", "PositionGet", "DrawPosition", "MLLMReply")


class Method(str, Enum):
    DIRECT = "direct"
    COT = "cot"
    ONESHOT_COT = "oneshot"
    DRAFT_COT_GT = "draftcot-gt"
    D2R_TASK = "d2r-task"
    D2R_ITERATION = "d2r-iteration"
    D2R_MANAGER = "d2r-manager"
    D2R_FINALIZE = "d2r-finalize"


@lru_cache(maxsize=None)
def template(name: str) -> str:
    return resources.files("grassland").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8").rstrip("\n")


@lru_cache(maxsize=None)
def sentinels() -> dict[str, list[str]]:
    text = resources.files("grassland").joinpath("templates", "sentinels.json").read_text(encoding="utf-8")
    return {k: v for k, v in json.loads(text).items() if k != "version"}


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    frame: Frame
    label: str


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class PromptBundle:
    system: str
    parts: tuple[Part, ...]
    method: Method
    task: Task

    def texts(self) -> list[str]:
        return [p.text for p in self.parts if isinstance(p, TextPart)]

    def images(self) -> list[ImagePart]:
        return [p for p in self.parts if isinstance(p, ImagePart)]

    def full_text(self) -> str:
        chunks = [self.system] if self.system else []
        for p in self.parts:
            chunks.append(p.text if isinstance(p, TextPart) else f"<image:{p.label}>")
        return "\n\n".join(chunks)


@dataclass(frozen=True)
class Thought:
    """One prior D2R step as it appears in the model context."""

    text: str | None
    draft: Frame | None


@dataclass(frozen=True)
class PromptOptions:
    cell_px: int = DEFAULT_CELL_PX
    frames: int | None = None  # default: 6 for navigation, len(actions)+1 for judgment
    base_frames: tuple[Frame, ...] | None = None  # pre-rendered task video
    thoughts: tuple[Thought, ...] = ()
    tools: tuple[str, ...] = TOOL_NAMES


def default_frame_count(instance: Instance) -> int:
    if instance.task is Task.JUDGMENT:
        return min(len(instance.actions) + 1, instance.scenario.horizon + 1)
    return min(DEFAULT_FRAMES, instance.scenario.horizon + 1)


def instruction(instance: Instance) -> str:
    """The task instruction text (the Direct prompt) for an instance."""
    if instance.task is Task.JUDGMENT:
        return template("judgment_direct").format(action_sequence=format_actions(instance.actions))
    frames = default_frame_count(instance)
    return template("navigation_direct").format(video_seconds=frames, step_limit=instance.step_limit)


def ground_truth_path(instance: Instance) -> PathLine:
    """Positions visited when replaying the ground-truth actions."""
    if instance.task is Task.JUDGMENT:
        actions = instance.actions
    else:
        actions = instance.ground_truth.route
    return PathLine(simulate(instance.scenario, actions).positions)


def _video(instance: Instance, options: PromptOptions, label: str = "frame", overlays=None) -> list[ImagePart]:
    if options.base_frames is not None and overlays is None:
        frames: Sequence[Frame] = options.base_frames
    else:
        n = options.frames or default_frame_count(instance)
        frames = render_video(instance.scenario, n, overlays, options.cell_px)
    return [ImagePart(f, f"{label}_{f.tick:04d}") for f in frames]


def _thought_parts(thoughts: Sequence[Thought]) -> list[Part]:
    parts: list[Part] = []
    for n, th in enumerate(thoughts, start=1):
        if th.text is not None:
            parts.append(TextPart(f"{THOUGHT_TAG} step {n}: {th.text}"))
        if th.draft is not None:
            parts.append(ImagePart(th.draft, f"draft_{n:02d}"))
    return parts


def build(method: Method | str, task: Task | str, instance: Instance, options: PromptOptions | None = None) -> PromptBundle:
    method, task = Method(method), Task(task)
    options = options or PromptOptions()
    if instance.task is not task:
        raise ContractViolation(f"{method.value} prompt for {task.value} given a {instance.task.value} instance")
    g = instruction(instance)
    kind = task.value

    if method in (Method.DIRECT, Method.D2R_TASK):
        return PromptBundle("", (TextPart(g), *_video(instance, options)), method, task)
    if method is Method.COT:
        parts = (TextPart(g), *_video(instance, options), TextPart(template("cot_suffix")))
        return PromptBundle("", parts, method, task)
    if method is Method.ONESHOT_COT:
        example = exemplar_for(task)
        shot = template(f"{kind}_oneshot").replace("<example_video>", "").rstrip()
        example_video = _video(example, PromptOptions(cell_px=options.cell_px), label="example")
        parts = (TextPart(g), *_video(instance, options), TextPart(shot), *example_video)
        return PromptBundle("", parts, method, task)
    if method is Method.DRAFT_COT_GT:
        path = ground_truth_path(instance)
        drafted = _video(instance, options, label="draft", overlays=lambda t: (path,))
        parts = (TextPart(g), *drafted, TextPart(template("cot_suffix")))
        return PromptBundle("", parts, method, task)
    if method is Method.D2R_MANAGER:
        request = template("manager_plan_request").format(tools=", ".join(options.tools), instruction=g)
        return PromptBundle(template("manager"), (TextPart(request),), method, task)

    context: list[Part] = [TextPart(f"<Task Description>\n{g}"), *_video(instance, options)]
    context += _thought_parts(options.thoughts)
    if method is Method.D2R_FINALIZE:
        context.append(TextPart(template(f"{kind}_finalize")))
    return PromptBundle(template("iteration"), tuple(context), method, task)


def build_manager_decision(task: Task | str, reply: str) -> PromptBundle:
    text = template("manager_decide").format(reply=reply)
    return PromptBundle(template("manager"), (TextPart(text),), Method.D2R_MANAGER, Task(task))


# -- parsing -------------------------------------------------------------------

_LETTER = re.compile(r"(?<![A-Za-z0-9_])([ABCD])(?![A-Za-z0-9_])")
_STRONG_AFTER = re.compile(r"\s*(?:[.):,;!]|$)")
_STRONG_BEFORE = re.compile(r"(?:answer\s+is|answer|choice|option|final)\s*[:\-]?\s*\(?$", re.IGNORECASE)
_ACTION = re.compile(r"\bgo\s+(up|down|left|right)\b", re.IGNORECASE)


def parse_choice(text: str) -> str | None:
    """Last standalone A-D letter.

    Letters followed by punctuation or end of text, or preceded by "answer
    is" and similar, are preferred over bare ones so that an article like
    "A lava tile" does not beat "So the answer is: C".
    """
    if not isinstance(text, str):
        return None
    strong, weak = [], []
    for m in _LETTER.finditer(text):
        letter = m.group(1)
        weak.append(letter)
        if _STRONG_AFTER.match(text, m.end()) or _STRONG_BEFORE.search(text[max(0, m.start() - 24):m.start()]):
            strong.append(letter)
    if strong:
        return strong[-1]
    return weak[-1] if weak else None


def format_route(actions: Sequence[Action]) -> str:
    return f"Action: [START] {format_actions(actions)} [END]"


def parse_actions(text: str) -> ActionSequence | None:
    """Route between the last ``[START]``/``[END]`` pair, or ``None``."""
    if not isinstance(text, str):
        return None
    upper = text.upper()
    end = upper.rfind("[END]")
    if end < 0:
        return None
    start = upper.rfind("[START]", 0, end)
    if start < 0:
        return None
    body = text[start + len("[START]"):end].strip().rstrip(".").strip()
    tokens = [t for t in re.split(r"[,\s]+", body) if t]
    if len(tokens) % 2:
        return None
    out = []
    for verb, direction in zip(tokens[::2], tokens[1::2]):
        if verb.lower() != "go":
            return None
        try:
            out.append(Action(direction.lower()))
        except ValueError:
            return None
    return tuple(out)


def parse_step_action(text: str) -> Action | None:
    """First ``Go <dir>`` command in a reply; later ones are ignored."""
    if not isinstance(text, str):
        return None
    m = _ACTION.search(text)
    return Action(m.group(1).lower()) if m else None


@dataclass(frozen=True)
class ParsedAnswer:
    raw: str
    judgment: str | None = None
    navigation: ActionSequence | None = None

    @property
    def empty(self) -> bool:
        return self.judgment is None and self.navigation is None


def parse_answer(task: Task | str, text: str) -> ParsedAnswer:
    if Task(task) is Task.JUDGMENT:
        return ParsedAnswer(text, judgment=parse_choice(text))
    return ParsedAnswer(text, navigation=parse_actions(text))

"""Tick simulator for Maze Judgment ground truth.

Within a tick the agent moves first, then lava moves. The agent fails if it
lands on water, on a cell lava occupied before the tick, or on a cell lava
occupies after the tick. Reaching the destination is checked last, so arriving
there together with lava is a lava failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

from grassland.errors import ContractViolation, HorizonError
from grassland.world import (
    Action,
    Cell,
    Coord,
    DynamicScenario,
    Outcome,
    neighbor,
)

CHOICE_LETTERS = {
    Outcome.SUCCESS: "A",
    Outcome.FAIL_WATER: "B",
    Outcome.FAIL_LAVA: "C",
    Outcome.UNFINISHED: "D",
}
LETTER_OUTCOMES = {v: k for k, v in CHOICE_LETTERS.items()}

CHOICE_TEXT = {
    "A": "Action Success.",
    "B": "Action Failed: Fall into the water.",
    "C": "Action Failed: Fall into the lava.",
    "D": "Action Failed: Agent Safe but Fail to Reach Destination.",
}


class StepResult(NamedTuple):
    new_pos: Coord
    blocked: bool
    outcome: Outcome | None  # None means the episode continues


@dataclass(frozen=True)
class Trace:
    positions: tuple[Coord, ...]
    outcome: Outcome
    steps_executed: int
    blocked_flags: tuple[bool, ...]

    @property
    def final(self) -> Coord:
        return self.positions[-1]


def step(pos: Coord, action: Action, scenario: DynamicScenario, t: int) -> StepResult:
    """Advance one tick. ``pos`` is the agent position after tick ``t - 1``."""
    if t < 1:
        raise ContractViolation(f"ticks start at 1, got {t}")
    if t > scenario.horizon:
        raise HorizonError(f"tick {t} beyond horizon {scenario.horizon}")
    world = scenario.world
    new_pos, blocked = neighbor(pos, action, world)
    if world.cell(new_pos) is Cell.WATER:
        return StepResult(new_pos, blocked, Outcome.FAIL_WATER)
    if new_pos in scenario.lava_frames[t - 1] or new_pos in scenario.lava_frames[t]:
        return StepResult(new_pos, blocked, Outcome.FAIL_LAVA)
    if new_pos == world.dest:
        return StepResult(new_pos, blocked, Outcome.SUCCESS)
    return StepResult(new_pos, blocked, None)


def simulate(scenario: DynamicScenario, actions: Sequence[Action]) -> Trace:
    if len(actions) > scenario.horizon:
        raise HorizonError(f"{len(actions)} actions exceed horizon {scenario.horizon}")
    start = scenario.world.start
    if start is None:
        raise ContractViolation("scenario has no start position")
    pos = start
    positions = [pos]
    blocked_flags: list[bool] = []
    if start == scenario.world.dest:
        return Trace(tuple(positions), Outcome.SUCCESS, 0, ())
    for t, action in enumerate(actions, start=1):
        pos, blocked, outcome = step(pos, action, scenario, t)
        positions.append(pos)
        blocked_flags.append(blocked)
        if outcome is not None:
            return Trace(tuple(positions), outcome, t, tuple(blocked_flags))
    return Trace(tuple(positions), Outcome.UNFINISHED, len(actions), tuple(blocked_flags))


def outcome_to_choice(outcome: Outcome) -> str:
    return CHOICE_LETTERS[outcome]


def choice_to_outcome(letter: str) -> Outcome:
    return LETTER_OUTCOMES[letter]

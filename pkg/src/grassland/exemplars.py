"""Fixed hand-built instances shown in one-shot prompts.

Each one replays exactly the worked example its prompt text narrates, which
the test suite checks through the simulator and planner.
"""

from __future__ import annotations

from functools import lru_cache

from grassland.generator import Instance, Level, Task, difficulty
from grassland.planner import safe_route
from grassland.world import Action, DynamicScenario, GridWorld, Outcome

U, D, L, R = Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT


def _frames(*tracks: list[tuple[int, int]]) -> tuple[frozenset, ...]:
    return tuple(frozenset(step) for step in zip(*tracks))


@lru_cache(maxsize=None)
def judgment_exemplar() -> Instance:
    world = GridWorld.empty(7, 7, start=(3, 3), dest=(2, 2))
    frames = _frames(
        [(0, 6), (0, 5), (0, 6), (1, 6), (1, 5), (0, 5), (0, 6), (1, 6), (1, 5)],
        [(6, 0), (6, 1), (5, 1), (5, 0), (6, 0), (6, 1), (6, 2), (6, 1), (6, 0)],
    )
    config = difficulty(Task.JUDGMENT, Level.EASY)
    return Instance("exemplar-judgment", config, DynamicScenario(world, frames), (D, U, U, L), Outcome.SUCCESS, 0)


@lru_cache(maxsize=None)
def navigation_exemplar() -> Instance:
    # Row 2 is flooded except the destination, so the only way in is from (1,4).
    # The second lava trap sits on the destination until tick 4, forcing one
    # wasted move (bumping the right edge) before stepping down.
    world = GridWorld.from_rows(
        ["GGGGG", "GGGGG", "~~~~G", "GGGGG", "WWGGG"], start=(1, 0), dest=(2, 4)
    )
    frames = _frames(
        [(0, 2), (0, 1), (1, 1), (0, 1), (0, 2), (0, 3), (0, 2), (0, 1), (0, 0)],
        [(2, 4), (2, 4), (2, 4), (2, 4), (2, 4), (3, 4), (4, 4), (4, 3), (4, 2)],
    )
    scenario = DynamicScenario(world, frames)
    config = difficulty(Task.NAVIGATION, Level.NORMAL)
    return Instance("exemplar-navigation", config, scenario, (), safe_route(scenario, 6), 0)


def exemplar_for(task: Task) -> Instance:
    return judgment_exemplar() if Task(task) is Task.JUDGMENT else navigation_exemplar()

"""Safe-route search over the time-expanded state space ``(position, tick)``.

Moving lava becomes a static obstacle per time layer, so plain breadth-first
search finds the shortest safe route. Expanding actions in the fixed order
Up < Down < Left < Right makes the returned route the lexicographically
smallest among the shortest ones.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from grassland.dynamics import step
from grassland.errors import ContractViolation, HorizonError
from grassland.world import ACTIONS, Action, ActionSequence, Coord, DynamicScenario, Outcome


@dataclass(frozen=True)
class PlanResult:
    route: ActionSequence | None
    expanded: int = 0  # number of (pos, tick) states dequeued

    @property
    def solvable(self) -> bool:
        return self.route is not None

    @property
    def length(self) -> int | None:
        return None if self.route is None else len(self.route)

    def __eq__(self, other: object) -> bool:
        # ``expanded`` is search bookkeeping, not part of the answer.
        if not isinstance(other, PlanResult):
            return NotImplemented
        return self.route == other.route

    def __hash__(self) -> int:
        return hash(self.route)


def safe_route(scenario: DynamicScenario, step_limit: int) -> PlanResult:
    if step_limit > scenario.horizon:
        raise HorizonError(f"step limit {step_limit} exceeds horizon {scenario.horizon}")
    start = scenario.world.start
    if start is None or scenario.world.dest is None:
        raise ContractViolation("scenario needs both start and destination")
    if start == scenario.world.dest:
        return PlanResult((), 0)

    parent: dict[tuple[Coord, int], tuple[tuple[Coord, int], Action]] = {}
    seen = {(start, 0)}
    queue = deque([(start, 0)])
    expanded = 0
    while queue:
        state = queue.popleft()
        expanded += 1
        pos, t = state
        if t == step_limit:
            continue
        for action in ACTIONS:
            new_pos, _, outcome = step(pos, action, scenario, t + 1)
            nxt = (new_pos, t + 1)
            if outcome is Outcome.SUCCESS:
                parent[nxt] = (state, action)
                return PlanResult(_unwind(parent, nxt, (start, 0)), expanded)
            if outcome is not None or nxt in seen:
                continue
            seen.add(nxt)
            parent[nxt] = (state, action)
            queue.append(nxt)
    return PlanResult(None, expanded)


def _unwind(parent, state, root) -> ActionSequence:
    actions = []
    while state != root:
        state, action = parent[state]
        actions.append(action)
    return tuple(reversed(actions))


def is_solvable(scenario: DynamicScenario, step_limit: int) -> bool:
    return safe_route(scenario, step_limit).solvable


class RouteStats(NamedTuple):
    mean_length: float | None  # None when no route is present
    count_solvable: int


def route_stats(results: Iterable[PlanResult]) -> RouteStats:
    lengths = [r.length for r in results if r.route is not None]
    if not lengths:
        return RouteStats(None, 0)
    return RouteStats(sum(lengths) / len(lengths), len(lengths))

"""Builders, strategies and independent oracles shared by the tests."""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

from hypothesis import strategies as st

from grassland.dynamics import outcome_to_choice, simulate
from grassland.generator import Instance, Task, difficulty, generate_batch
from grassland.planner import safe_route
from grassland.prompts import ParsedAnswer
from grassland.world import ACTIONS, Cell, Coord, DynamicScenario, GridWorld, Outcome

U, D, L, R = ACTIONS


def scenario(
    rows: Sequence[str] | tuple[int, int],
    start,
    dest,
    lava: Sequence[Iterable] = (),
    horizon: int = 8,
) -> DynamicScenario:
    """Grid from row strings (G/W/~) or an empty (h, w); lava frames padded by repeating the last."""
    if isinstance(rows, tuple):
        world = GridWorld.empty(rows[0], rows[1], start, dest)
    else:
        world = GridWorld.from_rows(list(rows), start=start, dest=dest)
    frames = [frozenset(Coord(*c) for c in f) for f in lava] or [frozenset()]
    frames += [frames[-1]] * (horizon + 1 - len(frames))
    return DynamicScenario(world, tuple(frames[: horizon + 1]))


def judgment_instance(scen: DynamicScenario, actions, iid: str = "j") -> Instance:
    cfg = difficulty(Task.JUDGMENT, "easy", height=scen.world.height, width=scen.world.width)
    return Instance(iid, cfg, scen, tuple(actions), simulate(scen, actions).outcome, 0)


def navigation_instance(scen: DynamicScenario, iid: str = "n") -> Instance:
    cfg = difficulty(Task.NAVIGATION, "easy", height=scen.world.height, width=scen.world.width)
    return Instance(iid, cfg, scen, (), safe_route(scen, cfg.step_limit), 0)


def e1() -> DynamicScenario:
    """3x3 open grass, start bottom-left, destination top-left."""
    return scenario((3, 3), (2, 0), (0, 0))


def brute_force(scen: DynamicScenario, limit: int):
    """Exhaustive oracle over all 4^limit sequences.

    Returns (solvable, optimal length, lexicographically smallest optimal
    prefix under Up<Down<Left<Right), all derived only from ``simulate``.
    """
    best = None
    for seq in itertools.product(range(4), repeat=limit):
        trace = simulate(scen, [ACTIONS[i] for i in seq])
        if trace.outcome is Outcome.SUCCESS:
            key = (trace.steps_executed, seq[: trace.steps_executed])
            if best is None or key < best:
                best = key
    if best is None:
        return False, None, None
    return True, best[0], tuple(ACTIONS[i] for i in best[1])


@st.composite
def scenarios(draw, min_side: int = 3, max_side: int = 5, max_lava: int = 2, horizon: int = 8):
    h = draw(st.integers(min_side, max_side))
    w = draw(st.integers(min_side, max_side))
    cells = draw(st.lists(st.sampled_from("GGGGW~"), min_size=h * w, max_size=h * w))
    grid = [list(cells[r * w:(r + 1) * w]) for r in range(h)]
    every = [Coord(r, c) for r in range(h) for c in range(w)]
    start, dest = draw(st.lists(st.sampled_from(every), min_size=2, max_size=2, unique=True))
    for c in (start, dest):
        grid[c.row][c.col] = "G"
    world = GridWorld.from_rows(["".join(row) for row in grid], start=start, dest=dest)
    grass = world.coords(Cell.GRASS)
    k = draw(st.integers(0, min(max_lava, len(grass) - 1)))
    first = draw(st.lists(st.sampled_from([c for c in grass if c != start]), min_size=k, max_size=k, unique=True))
    frames = [frozenset(first)]
    for _ in range(horizon):
        frames.append(frozenset(draw(st.lists(st.sampled_from(grass), min_size=k, max_size=k, unique=True))))
    return DynamicScenario(world, tuple(frames))


action_seqs = st.lists(st.sampled_from(ACTIONS), max_size=8).map(tuple)


def synthetic_episodes():
    """40 hand-designed episodes (20 judgment, 20 navigation) with hand counts.

    Navigation map: 5x5 grass, start (4,0), destination (4,4), water at (3,0),
    one lava cell parked in the far corner (0,0).

      6 x RRRR      arrived, effective 4, answer 4
      4 x RRRRUU    arrived at tick 4, answer 6
      2 x RRRRLLL   7 actions, truncated to 6, arrived at tick 4, answer 7
      2 x LRRRR     bump the left edge first, arrived at tick 5, answer 5
      3 x U         water
      2 x R         safe but short
      1 x none      unparseable

    arrived 14/20, failed 3/20, unfinished 3/20
    effective mean (6*4 + 4*4 + 2*4 + 2*5) / 14 = 58/14
    answer mean    (6*4 + 4*6 + 2*7 + 2*5) / 14 = 72/14

    Judgment: 20 instances whose gold letters cycle A, B, C, D (5 each).
    Correct answers per gold letter: A 5, B 3, C 1, D 0, so total 9/20.
    """
    nav_scen = scenario(["GGGGG", "GGGGG", "GGGGG", "~GGGG", "GGGGG"], (4, 0), (4, 4), [{(0, 0)}])
    nav = navigation_instance(nav_scen, "synthetic-nav")
    plan = (
        [(R, R, R, R)] * 6
        + [(R, R, R, R, U, U)] * 4
        + [(R, R, R, R, L, L, L)] * 2
        + [(L, R, R, R, R)] * 2
        + [(U,)] * 3
        + [(R,)] * 2
        + [None]
    )
    nav_eps = [(nav, None if r is None else ParsedAnswer("", navigation=r)) for r in plan]

    judg = generate_batch(difficulty("judgment", "hard"), 20, master_seed=40)
    wrong = {"A": "B", "B": "C", "C": "D", "D": "A"}
    right_per_gold = {"A": 5, "B": 3, "C": 1, "D": 0}
    seen = {k: 0 for k in "ABCD"}
    judg_eps = []
    for inst in judg:
        gold = outcome_to_choice(inst.ground_truth)
        k = seen[gold]
        seen[gold] += 1
        if k < right_per_gold[gold]:
            letter = gold
        elif gold == "C" and k == 4:
            letter = None
        else:
            letter = wrong[gold]
        judg_eps.append((inst, ParsedAnswer("", judgment=letter)))

    expected = {
        "total_acc": 9 / 20,
        "per_choice_acc": {"A": 1.0, "B": 0.6, "C": 0.2, "D": 0.0},
        "support": {"A": 5, "B": 5, "C": 5, "D": 5},
        "arrived_pct": 14 / 20,
        "failed_pct": 3 / 20,
        "unfinished_pct": 3 / 20,
        "ave_step_effective": 58 / 14,
        "ave_step_answer": 72 / 14,
    }
    return judg_eps, nav_eps, expected

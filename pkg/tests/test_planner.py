import random

import pytest
from hypothesis import given, settings

from grassland.dynamics import simulate
from grassland.errors import HorizonError
from grassland.generator import LavaMover, Level, Task, difficulty, generate
from grassland.planner import PlanResult, is_solvable, route_stats, safe_route
from grassland.world import GridWorld, Outcome

from helpers import D, R, U, brute_force, scenario, scenarios


def test_empty_grid_straight_line():
    plan = safe_route(scenario((5, 5), (4, 0), (4, 4)), 6)
    assert plan.route == (R, R, R, R) and plan.length == 4


def test_enclosed_destination_unsolvable():
    scen = scenario(["GGGGG", "GGWGG", "GWGWG", "GGWGG", "GGGGG"], (4, 0), (2, 2))
    assert safe_route(scen, 6).route is None
    assert not is_solvable(scen, 6)


def test_adjacent_is_solvable():
    assert is_solvable(scenario((3, 3), (1, 1), (1, 2)), 6)


def test_step_limit_beyond_horizon():
    with pytest.raises(HorizonError):
        safe_route(scenario((3, 3), (1, 1), (1, 2), horizon=5), 6)


def test_waits_by_bumping_when_needed():
    # Lava sits on the single entry cell at ticks 0..2; the shortest safe way in
    # spends a tick bumping the top edge.
    scen = scenario(["GGG", "~G~", "~G~"], (0, 1), (2, 1), [{(1, 1)}, {(1, 1)}, {(0, 0)}])
    plan = safe_route(scen, 6)
    assert plan.route == (U, U, D, D)
    assert simulate(scen, plan.route).outcome is Outcome.SUCCESS


def test_patrolling_lava_matches_enumeration():
    cfg = difficulty(Task.NAVIGATION, Level.EASY, mover=LavaMover("patrol", axis="row"))
    inst = generate(cfg, 20240611)
    solvable, length, route = brute_force(inst.scenario, 6)
    plan = safe_route(inst.scenario, 6)
    assert (plan.solvable, plan.length, plan.route) == (solvable, length, route)


def test_route_stats():
    assert route_stats([PlanResult((R,) * 4), PlanResult((U,) * 4)]) == (4.0, 2)
    assert route_stats([]) == (None, 0)
    assert route_stats([PlanResult(None)]) == (None, 0)


@settings(max_examples=40, deadline=None)
@given(scenarios(min_side=3, max_side=4, max_lava=2))
def test_agrees_with_enumeration_on_random_scenarios(scen):
    solvable, length, route = brute_force(scen, 5)
    plan = safe_route(scen, 5)
    assert (plan.solvable, plan.length, plan.route) == (solvable, length, route)


@given(scenarios())
def test_soundness(scen):
    plan = safe_route(scen, 6)
    if plan.solvable:
        trace = simulate(scen, plan.route)
        assert trace.outcome is Outcome.SUCCESS and trace.steps_executed == plan.length <= 6


def test_unsolvable_when_lava_covers_every_neighbour_forever():
    world = GridWorld.empty(3, 3, (1, 1), (0, 0))
    scen = scenario((3, 3), (1, 1), (0, 0), [{(0, 1), (1, 0), (1, 2), (2, 1)}])
    assert scen.world == world
    assert safe_route(scen, 6).route is None


def test_deterministic_across_calls():
    rng = random.Random(3)
    for _ in range(20):
        inst = generate(difficulty(Task.NAVIGATION, Level.HARD), rng.getrandbits(32))
        assert safe_route(inst.scenario, 6) == safe_route(inst.scenario, 6) == inst.ground_truth

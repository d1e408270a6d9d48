import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from grassland.dynamics import simulate
from grassland.errors import ContractViolation
from grassland.exemplars import judgment_exemplar, navigation_exemplar
from grassland.generator import Task, difficulty, generate
from grassland.planner import safe_route
from grassland.prompts import (
    Method,
    PromptOptions,
    TextPart,
    Thought,
    build,
    build_manager_decision,
    format_route,
    parse_actions,
    parse_answer,
    parse_choice,
    parse_step_action,
    sentinels,
    template,
)
from grassland.render import PathLine, render_frame, render_video
from grassland.world import ACTIONS, Outcome

from helpers import D, L, R, U, e1, judgment_instance

SENTINEL_KEYS = {
    (Method.DIRECT, Task.JUDGMENT): ["judgment"],
    (Method.DIRECT, Task.NAVIGATION): ["navigation"],
    (Method.COT, Task.JUDGMENT): ["judgment", "cot"],
    (Method.COT, Task.NAVIGATION): ["navigation", "cot"],
    (Method.ONESHOT_COT, Task.JUDGMENT): ["judgment", "oneshot_judgment"],
    (Method.ONESHOT_COT, Task.NAVIGATION): ["navigation", "oneshot_navigation"],
    (Method.DRAFT_COT_GT, Task.JUDGMENT): ["judgment", "cot"],
    (Method.DRAFT_COT_GT, Task.NAVIGATION): ["navigation", "cot"],
    (Method.D2R_TASK, Task.JUDGMENT): ["judgment"],
    (Method.D2R_TASK, Task.NAVIGATION): ["navigation"],
    (Method.D2R_MANAGER, Task.JUDGMENT): ["manager", "judgment"],
    (Method.D2R_MANAGER, Task.NAVIGATION): ["manager", "navigation"],
    (Method.D2R_ITERATION, Task.JUDGMENT): ["iteration", "judgment"],
    (Method.D2R_ITERATION, Task.NAVIGATION): ["iteration", "navigation"],
    (Method.D2R_FINALIZE, Task.JUDGMENT): ["iteration", "judgment"],
    (Method.D2R_FINALIZE, Task.NAVIGATION): ["iteration", "navigation"],
}


@pytest.fixture(scope="module")
def instances():
    return {
        Task.JUDGMENT: generate(difficulty("judgment", "normal"), 3, target=Outcome.FAIL_LAVA),
        Task.NAVIGATION: generate(difficulty("navigation", "normal"), 3),
    }


def test_every_method_is_covered():
    assert {m for m, _ in SENTINEL_KEYS} == set(Method)


@pytest.mark.parametrize("method,task", list(SENTINEL_KEYS))
def test_sentinels_verbatim(method, task, instances):
    text = build(method, task, instances[task]).full_text()
    for key in SENTINEL_KEYS[method, task]:
        for sentence in sentinels()[key]:
            assert sentence in text, (method, key, sentence)


def test_headline_sentences():
    assert "reach the destination safely within 6 steps" in sentinels()["navigation"]
    assert "2.The black square represents your current position." in sentinels()["iteration"]
    assert "Consider player move first in same time" in sentinels()["judgment"]


def test_direct_judgment_lists_actions(instances):
    inst = instances[Task.JUDGMENT]
    bundle = build(Method.DIRECT, Task.JUDGMENT, inst)
    listed = ", ".join(a.command for a in inst.actions)
    assert listed in bundle.texts()[0]
    assert len(bundle.images()) == len(inst.actions) + 1
    assert bundle.images()[0].frame == render_frame(inst.scenario, 0)


def test_navigation_video_is_six_frames(instances):
    bundle = build(Method.DIRECT, Task.NAVIGATION, instances[Task.NAVIGATION])
    assert [p.frame.tick for p in bundle.images()] == list(range(6))
    assert "6-second video" in bundle.texts()[0]


def test_cot_is_direct_plus_suffix(instances):
    for task, inst in instances.items():
        direct = build(Method.DIRECT, task, inst)
        cot = build(Method.COT, task, inst)
        assert cot.parts[:-1] == direct.parts
        assert cot.parts[-1] == TextPart("Let's think it step-by-step and make right choice.")


def test_draft_cot_gt_draws_ground_truth_path():
    inst = judgment_instance(e1(), [U, U])
    bundle = build(Method.DRAFT_COT_GT, Task.JUDGMENT, inst)
    path = PathLine([(2, 0), (1, 0), (0, 0)])
    expected = render_video(inst.scenario, 3, lambda t: (path,))
    assert [p.frame for p in bundle.images()] == expected
    assert all(p.label.startswith("draft_") for p in bundle.images())


def test_oneshot_appends_example_video(instances):
    inst = instances[Task.NAVIGATION]
    bundle = build(Method.ONESHOT_COT, Task.NAVIGATION, inst)
    labels = [p.label for p in bundle.images()]
    assert labels[:6] == [f"frame_{i:04d}" for i in range(6)]
    assert labels[6:] == [f"example_{i:04d}" for i in range(6)]
    assert "<example_video>" not in bundle.full_text()


def test_task_mismatch(instances):
    with pytest.raises(ContractViolation):
        build(Method.DIRECT, Task.NAVIGATION, instances[Task.JUDGMENT])


def test_iteration_context_layout(instances):
    inst = instances[Task.NAVIGATION]
    draft = render_frame(inst.scenario, 1)
    thoughts = (Thought("Go up", draft), Thought("Go left", None), Thought(None, draft))
    bundle = build(Method.D2R_ITERATION, Task.NAVIGATION, inst, PromptOptions(thoughts=thoughts))
    texts = bundle.texts()
    assert texts[0].startswith("<Task Description>\n")
    assert texts[1:] == ["<visualization of the thought> step 1: Go up", "<visualization of the thought> step 2: Go left"]
    assert [p.label for p in bundle.images()][6:] == ["draft_01", "draft_03"]
    assert bundle.system == template("iteration")


def test_manager_decision_prompt():
    bundle = build_manager_decision(Task.JUDGMENT, "I am unsure")
    assert "I am unsure" in bundle.full_text() and bundle.system == template("manager")


def test_exemplars_replay_their_narratives():
    j = judgment_exemplar()
    assert j.actions == (D, U, U, L)
    assert simulate(j.scenario, j.actions).outcome is Outcome.SUCCESS
    n = navigation_exemplar()
    assert safe_route(n.scenario, 6).route == (R, R, R, R, R, D)
    assert n.ground_truth.route == (R, R, R, R, R, D)
    assert format_route(n.ground_truth.route).endswith("Go right, Go right, Go right, Go right, Go right, Go down [END]")


# -- parsing ---------------------------------------------------------------------

def test_parse_choice_examples():
    assert parse_choice("...So the answer is: A. Action Success.") == "A"
    assert parse_choice("I think B, no \N{EM DASH} final: D") == "D"
    assert parse_choice("no letter here") is None
    assert parse_choice("So the answer is: C. A lava tile moved onto the agent") == "C"
    assert parse_choice("D") == "D"
    assert parse_choice(None) is None


def test_parse_actions_examples():
    assert parse_actions("Action: [START] Go right, Go up, Go down [END]") == (R, U, D)
    assert parse_actions("[START] Go sideways [END]") is None
    assert parse_actions("[start] go LEFT go up [end]") == (L, U)
    assert parse_actions("[START] Go up [END] then [START] Go down, Go down [END]") == (D, D)
    assert parse_actions("Go up, Go down") is None
    assert parse_actions("[START] [END]") == ()
    assert parse_actions("[START] Go up, Go [END]") is None


def test_round_trip_1000_sequences():
    rng = random.Random(1000)
    for _ in range(1000):
        seq = tuple(rng.choice(ACTIONS) for _ in range(rng.randint(0, 12)))
        assert parse_actions(format_route(seq)) == seq


@given(st.lists(st.sampled_from(ACTIONS), max_size=20).map(tuple))
def test_round_trip_property(seq):
    assert parse_actions(format_route(seq)) == seq


@given(st.text())
def test_parsers_are_total(text):
    assert parse_choice(text) in (None, "A", "B", "C", "D")
    parse_actions(text)
    parse_step_action(text)
    for task in Task:
        parse_answer(task, text)


def test_step_action_first_command():
    assert parse_step_action("Go left. Later I will Go up") is L
    assert parse_step_action("go DOWN <can_not_pass>") is D
    assert parse_step_action("thinking...") is None

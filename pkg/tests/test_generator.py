import collections
import json
import random

import pytest

from grassland.dynamics import simulate
from grassland.errors import GenerationError, IntegrityError, ParseError
from grassland.generator import (
    TABLE1,
    DifficultyConfig,
    LavaMover,
    Level,
    Task,
    check_instance,
    decode_instance,
    difficulty,
    encode_instance,
    export_instances,
    generate,
    generate_batch,
    import_instances,
    sample_judgment_actions,
)
from grassland.planner import safe_route
from grassland.world import Cell, GridWorld, Outcome, validate

from helpers import scenario


def counts(inst):
    world = inst.scenario.world
    return (
        world.height,
        world.width,
        len(world.coords(Cell.WALL)),
        len(inst.scenario.lava_frames[0]),
        len(world.coords(Cell.WATER)),
    )


def test_presets():
    assert counts_of(difficulty("judgment", "hard")) == (7, 7, 2, 4, (2, 2))
    assert counts_of(difficulty("navigation", "easy")) == (5, 5, 1, 1, (0, 4))
    assert counts_of(difficulty("navigation", "normal")) == (5, 5, 2, 2, (0, 4))
    assert counts_of(difficulty("navigation", "hard")) == (5, 5, 3, 2, (0, 6))
    assert counts_of(difficulty("judgment", "easy")) == (7, 7, 0, 2, (0, 0))
    assert counts_of(difficulty("judgment", "normal")) == (7, 7, 1, 3, (1, 1))


def counts_of(cfg):
    return (cfg.height, cfg.width, cfg.n_walls, cfg.n_lava, cfg.water)


@pytest.mark.parametrize("task,level", list(TABLE1))
def test_entity_counts_and_consistency(task, level):
    cfg = difficulty(task, level)
    for inst in generate_batch(cfg, 40, master_seed=11):
        h, w, walls, lava, water = counts(inst)
        assert (h, w, walls, lava) == (cfg.height, cfg.width, cfg.n_walls, cfg.n_lava)
        assert cfg.water[0] <= water <= cfg.water[1]
        assert all(len(f) == lava for f in inst.scenario.lava_frames)
        assert validate(inst.scenario, cfg.step_limit) == []
        assert check_instance(inst) == []


def test_seed_determinism():
    for task in Task:
        cfg = difficulty(task, "normal")
        assert encode_instance(generate(cfg, 42)) == encode_instance(generate(cfg, 42))
        assert encode_instance(generate(cfg, 42)) != encode_instance(generate(cfg, 43))


def test_balanced_hard_judgment_buckets():
    insts = generate_batch(difficulty("judgment", "hard"), 500, master_seed=5)
    tally = collections.Counter(i.ground_truth for i in insts)
    assert tally == {o: 125 for o in Outcome}
    for inst in insts:
        assert simulate(inst.scenario, inst.actions).outcome is inst.ground_truth
        assert len(inst.actions) <= 6


def test_easy_judgment_has_no_water_bucket():
    cfg = difficulty("judgment", "easy")
    assert Outcome.FAIL_WATER not in cfg.reachable_outcomes()
    with pytest.raises(GenerationError):
        generate(cfg, 1, target=Outcome.FAIL_WATER)


def test_success_sequences_stop_at_arrival():
    for inst in generate_batch(difficulty("judgment", "normal"), 40, master_seed=9):
        if inst.ground_truth is Outcome.SUCCESS:
            assert simulate(inst.scenario, inst.actions).steps_executed == len(inst.actions)


def test_sample_actions_zero_perturbation_returns_route():
    scen = scenario((5, 5), (4, 0), (4, 4))
    seq = sample_judgment_actions(scen, random.Random(0), 6, perturb_rate=0)
    assert seq == safe_route(scen, 6).route
    assert simulate(scen, seq).outcome is Outcome.SUCCESS


def test_sample_actions_reproducible():
    scen = scenario((5, 5), (4, 0), (4, 4))
    a = [sample_judgment_actions(scen, random.Random(7), 6) for _ in range(3)]
    assert a[0] == a[1] == a[2] and len(a[0]) <= 6


def test_lava_movers_stay_on_grass():
    world = GridWorld.from_rows(["GGGGG", "GWGWG", "GG~GG", "GGGGG", "GGGGG"])
    for mover in (LavaMover(), LavaMover("patrol"), LavaMover("patrol", axis="col", span=1)):
        frames = mover.trajectories(world, [(0, 0), (4, 4), (3, 1)], 8, random.Random(2))
        assert len(frames) == 9
        for frame in frames:
            assert len(frame) == 3
            assert all(world.cell(c) is Cell.GRASS for c in frame)
        for a, b in zip(frames, frames[1:]):
            # Each trap moves at most one cell per tick.
            assert all(min(abs(p.row - q.row) + abs(p.col - q.col) for q in b) <= 1 for p in a)


def test_config_round_trip():
    cfg = difficulty("navigation", "hard", mover=LavaMover("patrol", axis="row"))
    assert DifficultyConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    assert len(cfg.digest()) == 16


def test_export_import_600(tmp_path):
    insts = []
    for level in Level:
        insts += generate_batch(difficulty("navigation", level), 100, master_seed=3)
        insts += generate_batch(difficulty("judgment", level), 100, master_seed=3)
    assert len(insts) == 600
    export_instances(insts, tmp_path)
    again = import_instances(tmp_path)
    assert again == insts
    manifest = [json.loads(line) for line in (tmp_path / "manifest.jsonl").read_text().splitlines()]
    assert [m["id"] for m in manifest] == [i.id for i in insts]
    assert {"id", "seed", "file", "config_digest"} == set(manifest[0])
    export_instances(again, tmp_path / "b")
    for i in insts[:20]:
        assert (tmp_path / f"{i.id}.json").read_bytes() == (tmp_path / "b" / f"{i.id}.json").read_bytes()


def test_tampered_ground_truth_rejected(tmp_path):
    inst = generate_batch(difficulty("judgment", "hard"), 4, master_seed=1)[0]
    doc = json.loads(encode_instance(inst))
    letters = [o.value for o in Outcome if o.value != doc["ground_truth"]]
    doc["ground_truth"] = letters[0]
    with pytest.raises(IntegrityError):
        decode_instance(json.dumps(doc))

    nav = generate(difficulty("navigation", "easy"), 5)
    doc = json.loads(encode_instance(nav))
    doc["ground_truth"] = {"route": ["up"], "length": 1}
    with pytest.raises(IntegrityError):
        decode_instance(json.dumps(doc))


def test_parse_errors_carry_context():
    text = encode_instance(generate(difficulty("navigation", "easy"), 5))
    with pytest.raises(ParseError, match=r"^f\.json:\d+:\d+"):
        decode_instance(text[:-3], "f.json")
    broken = text.replace('"up"', '"sideways"', 1).replace('"down"', '"sideways"', 1)
    broken = broken.replace('"left"', '"sideways"', 1).replace('"right"', '"sideways"', 1)
    with pytest.raises(ParseError, match=r"f\.json:\d+: field 'ground_truth'"):
        decode_instance(broken, "f.json")
    missing = "\n".join(line for line in text.splitlines() if '"seed"' not in line)
    with pytest.raises(ParseError, match="field 'seed'"):
        decode_instance(missing, "f.json")


def test_manifest_tamper(tmp_path):
    insts = generate_batch(difficulty("navigation", "easy"), 3, master_seed=1)
    export_instances(insts, tmp_path)
    path = tmp_path / "manifest.jsonl"
    path.write_text(path.read_text().replace(f'"seed": {insts[1].seed}', '"seed": 1'))
    with pytest.raises(IntegrityError, match=":2:"):
        import_instances(tmp_path)

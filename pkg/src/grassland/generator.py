"""Seeded procedural generation of benchmark instances and their file format.

Difficulty presets follow the dataset table of the benchmark: judgment maps
are 7x7, navigation maps 5x5, with fixed wall and lava counts and a water
count (fixed or drawn from a range). Lava trajectories are synthesized by a
:class:`LavaMover`; navigation instances are rejection-sampled until a safe
route exists and judgment instances until the sampled action sequence lands in
the requested outcome bucket.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

from grassland.dynamics import simulate
from grassland.errors import GenerationError, IntegrityError, ParseError
from grassland.planner import PlanResult, safe_route
from grassland.world import (
    ACTIONS,
    ActionSequence,
    Cell,
    Coord,
    DynamicScenario,
    GridWorld,
    Outcome,
    actions_from_names,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)

MAX_ATTEMPTS = 10_000
MANIFEST_NAME = "manifest.jsonl"


class Task(str, Enum):
    JUDGMENT = "judgment"
    NAVIGATION = "navigation"


class Level(str, Enum):
    EASY = "easy"
    NORMAL = "normal"
    HARD = "hard"


@dataclass(frozen=True)
class LavaMover:
    """Law of motion for lava.

    ``random_walk``: each tick a trap stays with probability ``stay_prob``,
    otherwise steps to a uniformly chosen free grass neighbour.
    ``patrol``: a trap sweeps back and forth along ``axis`` (``row``/``col``,
    random per trap when ``None``) up to ``span`` cells from its origin.
    """

    kind: str = "random_walk"
    stay_prob: float = 0.2
    axis: str | None = None
    span: int = 2

    def __post_init__(self) -> None:
        if self.kind not in ("random_walk", "patrol"):
            raise ValueError(f"unknown lava mover {self.kind!r}")
        if self.axis not in (None, "row", "col"):
            raise ValueError(f"patrol axis must be 'row' or 'col', got {self.axis!r}")

    def trajectories(
        self, world: GridWorld, initial: Sequence[Coord], horizon: int, rng: random.Random
    ) -> tuple[frozenset[Coord], ...]:
        initial = [Coord(*c) for c in initial]
        positions = list(initial)
        if self.kind == "patrol":
            axes = [self.axis or rng.choice(("row", "col")) for _ in positions]
            signs = [rng.choice((-1, 1)) for _ in positions]
        frames = [frozenset(positions)]
        for _ in range(horizon):
            moved: list[Coord] = []
            for i, pos in enumerate(positions):
                # Earlier traps' new cells and later traps' current cells are taken,
                # which keeps staying always legal and frames collision-free.
                taken = set(moved) | set(positions[i + 1:])

                def free(c: Coord) -> bool:
                    return world.in_bounds(c) and world.cell(c) is Cell.GRASS and c not in taken

                if self.kind == "random_walk":
                    options = [Coord(pos.row + a.delta[0], pos.col + a.delta[1]) for a in ACTIONS]
                    options = [c for c in options if free(c)]
                    if options and rng.random() >= self.stay_prob:
                        pos = rng.choice(options)
                else:
                    origin = initial[i]
                    for sign in (signs[i], -signs[i]):
                        dr, dc = (0, sign) if axes[i] == "row" else (sign, 0)
                        cand = Coord(pos.row + dr, pos.col + dc)
                        offset = abs(cand.row - origin.row) + abs(cand.col - origin.col)
                        if offset <= self.span and free(cand):
                            signs[i] = sign
                            pos = cand
                            break
                moved.append(pos)
            positions = moved
            frames.append(frozenset(positions))
        return tuple(frames)


@dataclass(frozen=True)
class DifficultyConfig:
    task: Task
    level: Level
    height: int
    width: int
    n_walls: int
    n_lava: int
    water: tuple[int, int]  # inclusive range; equal bounds for a fixed count
    step_limit: int = 6
    horizon: int = 8
    mover: LavaMover = field(default_factory=LavaMover)
    balanced: bool = True
    action_length: tuple[int, int] = (5, 6)

    def __post_init__(self) -> None:
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "level", Level(self.level))
        object.__setattr__(self, "water", tuple(self.water))
        object.__setattr__(self, "action_length", tuple(self.action_length))
        if self.horizon < self.step_limit:
            raise ValueError(f"horizon {self.horizon} below step limit {self.step_limit}")
        if self.water[0] > self.water[1]:
            raise ValueError(f"empty water range {self.water}")
        if self.action_length[1] > self.step_limit:
            raise ValueError("judgment action length cannot exceed the step limit")

    def reachable_outcomes(self) -> tuple[Outcome, ...]:
        """Outcome buckets a judgment instance can land in under this config."""
        outcomes = list(Outcome)
        if self.water[1] == 0:
            outcomes.remove(Outcome.FAIL_WATER)
        if self.n_lava == 0:
            outcomes.remove(Outcome.FAIL_LAVA)
        return tuple(outcomes)

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["task"] = self.task.value
        doc["level"] = self.level.value
        doc["water"] = list(self.water)
        doc["action_length"] = list(self.action_length)
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> DifficultyConfig:
        doc = dict(doc)
        doc["mover"] = LavaMover(**doc.get("mover", {}))
        return cls(**doc)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# (walls, lava, water range) per task and level.
TABLE1: dict[tuple[Task, Level], tuple[int, int, tuple[int, int]]] = {
    (Task.JUDGMENT, Level.EASY): (0, 2, (0, 0)),
    (Task.JUDGMENT, Level.NORMAL): (1, 3, (1, 1)),
    (Task.JUDGMENT, Level.HARD): (2, 4, (2, 2)),
    (Task.NAVIGATION, Level.EASY): (1, 1, (0, 4)),
    (Task.NAVIGATION, Level.NORMAL): (2, 2, (0, 4)),
    (Task.NAVIGATION, Level.HARD): (3, 2, (0, 6)),
}

# Mean route lengths reported for the original dataset, for side-by-side reports.
REFERENCE_ROUTE_LENGTH: dict[tuple[Task, Level], float] = {
    (Task.JUDGMENT, Level.EASY): 5.32,
    (Task.JUDGMENT, Level.NORMAL): 6.00,
    (Task.JUDGMENT, Level.HARD): 5.67,
    (Task.NAVIGATION, Level.EASY): 3.47,
    (Task.NAVIGATION, Level.NORMAL): 3.75,
    (Task.NAVIGATION, Level.HARD): 4.34,
}


def difficulty(task: Task | str, level: Level | str, **overrides: Any) -> DifficultyConfig:
    task, level = Task(task), Level(level)
    walls, lava, water = TABLE1[task, level]
    side = 7 if task is Task.JUDGMENT else 5
    params: dict[str, Any] = dict(
        task=task, level=level, height=side, width=side, n_walls=walls, n_lava=lava, water=water
    )
    params.update(overrides)
    return DifficultyConfig(**params)


@dataclass(frozen=True)
class Instance:
    id: str
    config: DifficultyConfig
    scenario: DynamicScenario
    actions: ActionSequence
    ground_truth: Outcome | PlanResult
    seed: int

    @property
    def task(self) -> Task:
        return self.config.task

    @property
    def level(self) -> Level:
        return self.config.level

    @property
    def step_limit(self) -> int:
        return self.config.step_limit


def derive_seed(master_seed: int, index: int) -> int:
    """Independent 64-bit stream seed for instance ``index`` of a batch."""
    digest = hashlib.blake2b(f"{master_seed}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def sample_scenario(config: DifficultyConfig, rng: random.Random) -> DynamicScenario | None:
    h, w = config.height, config.width
    n_water = rng.randint(*config.water)
    picks = rng.sample(range(h * w), 2 + config.n_walls + n_water)
    coords = [Coord(*divmod(i, w)) for i in picks]
    start, dest = coords[0], coords[1]
    changes = {c: Cell.WALL for c in coords[2:2 + config.n_walls]}
    changes.update({c: Cell.WATER for c in coords[2 + config.n_walls:]})
    world = GridWorld.empty(h, w, start, dest).replace_cells(changes)
    # Lava may start on the destination but never on the start cell.
    candidates = [c for c in world.coords(Cell.GRASS) if c != start]
    if len(candidates) < config.n_lava:
        return None
    initial = rng.sample(candidates, config.n_lava)
    frames = config.mover.trajectories(world, initial, config.horizon, rng)
    return DynamicScenario(world, frames)


def sample_judgment_actions(
    scenario: DynamicScenario,
    rng: random.Random,
    step_limit: int,
    perturb_rate: float | None = None,
    length_range: tuple[int, int] = (5, 6),
) -> ActionSequence:
    """Mix a planner-route prefix with random perturbations.

    With ``perturb_rate == 0`` on a solvable scenario the planner route itself
    is returned. Otherwise each position keeps the route's action with
    probability ``1 - perturb_rate`` and is drawn uniformly at random past the
    route's end or when perturbed.
    """
    route = safe_route(scenario, step_limit).route or ()
    if perturb_rate is None:
        perturb_rate = rng.choice((0.0, 0.25, 0.5, 1.0))
    if route and perturb_rate == 0:
        return route
    n = min(rng.randint(*length_range), step_limit)
    seq = []
    for i in range(n):
        if i < len(route) and rng.random() >= perturb_rate:
            seq.append(route[i])
        else:
            seq.append(rng.choice(ACTIONS))
    return tuple(seq)


def generate(
    config: DifficultyConfig,
    seed: int,
    target: Outcome | None = None,
    instance_id: str | None = None,
) -> Instance:
    """Build one instance deterministically from ``(config, seed, target)``.

    For judgment configs with ``balanced`` set and no explicit ``target``, the
    bucket is drawn from the seeded stream; :func:`generate_batch` instead
    cycles through buckets by index so counts come out exactly balanced.
    """
    rng = random.Random(seed)
    instance_id = instance_id or f"{config.task.value}-{config.level.value}-{seed:016x}"
    judgment = config.task is Task.JUDGMENT
    if judgment and target is None and config.balanced:
        target = rng.choice(config.reachable_outcomes())
    if judgment and target is not None and target not in config.reachable_outcomes():
        raise GenerationError(f"outcome {target.value} unreachable under {config.level.value} config")

    for _ in range(MAX_ATTEMPTS):
        scenario = sample_scenario(config, rng)
        if scenario is None:
            continue
        if not judgment:
            plan = safe_route(scenario, config.step_limit)
            if plan.solvable:
                return Instance(instance_id, config, scenario, (), plan, seed)
            continue
        actions = sample_judgment_actions(
            scenario, rng, config.step_limit, length_range=config.action_length
        )
        trace = simulate(scenario, actions)
        if target is not None and trace.outcome is not target:
            continue
        if trace.outcome is Outcome.SUCCESS:
            actions = actions[:trace.steps_executed]
        return Instance(instance_id, config, scenario, actions, trace.outcome, seed)

    what = "a solvable scenario" if not judgment else f"outcome bucket {target and target.value}"
    raise GenerationError(
        f"gave up after {MAX_ATTEMPTS} attempts looking for {what} "
        f"({config.task.value}/{config.level.value}, seed {seed})"
    )


def generate_batch(config: DifficultyConfig, count: int, master_seed: int) -> list[Instance]:
    buckets = config.reachable_outcomes()
    out = []
    for i in range(count):
        target = buckets[i % len(buckets)] if config.task is Task.JUDGMENT and config.balanced else None
        iid = f"{config.task.value}-{config.level.value}-{i:04d}"
        out.append(generate(config, derive_seed(master_seed, i), target, iid))
    return out


# -- integrity ----------------------------------------------------------------

def check_instance(instance: Instance) -> list[str]:
    """Every invariant an instance must satisfy; empty when sound."""
    cfg = instance.config
    scenario = instance.scenario
    world = scenario.world
    problems = [str(v) for v in validate(scenario, cfg.step_limit)]
    if (world.height, world.width) != (cfg.height, cfg.width):
        problems.append(f"grid is {world.height}x{world.width}, config says {cfg.height}x{cfg.width}")
    if scenario.horizon != cfg.horizon:
        problems.append(f"horizon {scenario.horizon} differs from config {cfg.horizon}")
    n_walls = len(world.coords(Cell.WALL))
    n_water = len(world.coords(Cell.WATER))
    if n_walls != cfg.n_walls:
        problems.append(f"{n_walls} walls, config says {cfg.n_walls}")
    if not cfg.water[0] <= n_water <= cfg.water[1]:
        problems.append(f"{n_water} water cells outside {cfg.water}")
    if len(scenario.lava_frames[0]) != cfg.n_lava:
        problems.append(f"{len(scenario.lava_frames[0])} lava traps, config says {cfg.n_lava}")
    if problems:
        return problems

    if cfg.task is Task.JUDGMENT:
        if not isinstance(instance.ground_truth, Outcome):
            return ["judgment ground truth must be an outcome"]
        if len(instance.actions) > cfg.step_limit:
            problems.append(f"{len(instance.actions)} actions exceed step limit {cfg.step_limit}")
        else:
            actual = simulate(scenario, instance.actions).outcome
            if actual is not instance.ground_truth:
                problems.append(f"ground truth {instance.ground_truth.value} but simulation gives {actual.value}")
    else:
        if not isinstance(instance.ground_truth, PlanResult):
            return ["navigation ground truth must be a plan"]
        plan = safe_route(scenario, cfg.step_limit)
        if not plan.solvable:
            problems.append("navigation instance has no safe route")
        elif plan != instance.ground_truth:
            problems.append("stored route differs from the planner's route")
    return problems


# -- file format --------------------------------------------------------------

def instance_to_dict(instance: Instance) -> dict[str, Any]:
    scen = scenario_to_dict(instance.scenario)
    doc: dict[str, Any] = {
        "id": instance.id,
        "task": instance.task.value,
        "level": instance.level.value,
        "seed": instance.seed,
        "config": instance.config.to_dict(),
        **scen,
    }
    gt = instance.ground_truth
    if instance.task is Task.JUDGMENT:
        doc["actions"] = [a.value for a in instance.actions]
        doc["ground_truth"] = gt.value
    else:
        doc["ground_truth"] = {"route": [a.value for a in gt.route], "length": gt.length}
    doc["step_limit"] = instance.step_limit
    return doc


def encode_instance(instance: Instance) -> str:
    """One key per line, compact values, fixed key order; byte-stable."""
    doc = instance_to_dict(instance)
    lines = [f"  {json.dumps(k)}: {json.dumps(v, separators=(', ', ': '))}" for k, v in doc.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def _field_line(text: str, key: str) -> int | None:
    needle = f'"{key}":'
    for n, line in enumerate(text.splitlines(), start=1):
        if line.lstrip().startswith(needle):
            return n
    return None


def decode_instance(text: str, source: str = "<string>") -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError(f"{source}: expected a JSON object")

    current = "id"

    def where() -> str:
        line = _field_line(text, current)
        return f"{source}:{line}" if line else source

    try:
        current = "config"
        config = DifficultyConfig.from_dict(doc["config"])
        for key in ("task", "level", "step_limit"):
            current = key
            declared = doc[key]
            expected = getattr(config, key)
            if getattr(expected, "value", expected) != declared:
                raise ParseError(f"{key} {declared!r} disagrees with config {expected!r}")
        current = "grid"
        scenario = scenario_from_dict(doc)
        current = "ground_truth"
        gt_doc = doc["ground_truth"]
        if config.task is Task.JUDGMENT:
            current = "actions"
            actions = actions_from_names(doc["actions"])
            current = "ground_truth"
            gt: Outcome | PlanResult = Outcome(gt_doc)
        else:
            actions = ()
            route = actions_from_names(gt_doc["route"])
            if gt_doc.get("length") != len(route):
                raise ParseError("route length field does not match route")
            gt = PlanResult(route)
        current = "seed"
        seed = doc["seed"]
        if not isinstance(seed, int):
            raise ParseError("seed must be an integer")
        instance = Instance(doc["id"], config, scenario, actions, gt, seed)
    except ParseError as exc:
        raise ParseError(f"{where()}: field {current!r}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where()}: field {current!r}: {type(exc).__name__}: {exc}") from None

    problems = check_instance(instance)
    if problems:
        raise IntegrityError(f"{source}: " + "; ".join(problems))
    return instance


def export_instances(instances: Iterable[Instance], directory: str | Path) -> Path:
    """Write ``<id>.json`` per instance plus ``manifest.jsonl``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    for inst in instances:
        name = f"{inst.id}.json"
        (directory / name).write_text(encode_instance(inst), encoding="utf-8")
        entry = {"id": inst.id, "seed": inst.seed, "file": name, "config_digest": inst.config.digest()}
        manifest_lines.append(json.dumps(entry, separators=(", ", ": ")))
    manifest = directory / MANIFEST_NAME
    manifest.write_text("".join(line + "\n" for line in manifest_lines), encoding="utf-8")
    return manifest


def import_instances(directory: str | Path) -> list[Instance]:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.exists():
        raise ParseError(f"{manifest}: manifest not found")
    out = []
    for n, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            path = directory / entry["file"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"{manifest}:{n}: bad manifest entry ({exc})") from None
        inst = decode_instance(path.read_text(encoding="utf-8"), str(path))
        if inst.id != entry.get("id") or inst.seed != entry.get("seed"):
            raise IntegrityError(f"{manifest}:{n}: entry does not match {path.name}")
        if inst.config.digest() != entry.get("config_digest"):
            raise IntegrityError(f"{manifest}:{n}: config digest mismatch for {inst.id}")
        out.append(inst)
    return out


"""Immutable grid-world model: cells, coordinates, actions and dynamic scenarios.

Coordinates are ``(row, col)`` with the origin in the top-left corner; ``UP``
decreases the row and ``RIGHT`` increases the column. Lava is not a cell kind:
it lives in :class:`DynamicScenario` as one occupancy set per tick.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, NamedTuple, Sequence

from grassland.errors import ContractViolation, HorizonError, ParseError

MIN_SIDE = 3
MAX_SIDE = 32


class Coord(NamedTuple):
    row: int
    col: int

    def __str__(self) -> str:
        return f"({self.row},{self.col})"


class Cell(str, Enum):
    GRASS = "G"
    WALL = "W"
    WATER = "~"


class Action(str, Enum):
    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]

    @property
    def command(self) -> str:
        """The prompt-facing spelling, e.g. ``Go up``."""
        return f"Go {self.value}"


_DELTAS = {
    Action.UP: (-1, 0),
    Action.DOWN: (1, 0),
    Action.LEFT: (0, -1),
    Action.RIGHT: (0, 1),
}

# Canonical tie-break order for search and enumeration.
ACTIONS: tuple[Action, ...] = (Action.UP, Action.DOWN, Action.LEFT, Action.RIGHT)

ActionSequence = tuple[Action, ...]


class Outcome(str, Enum):
    SUCCESS = "success"
    FAIL_WATER = "fail_water"
    FAIL_LAVA = "fail_lava"
    UNFINISHED = "unfinished"

    @property
    def terminal(self) -> bool:
        return self is not Outcome.UNFINISHED


def format_actions(actions: Iterable[Action]) -> str:
    return ", ".join(a.command for a in actions)


def as_coord(value: Any) -> Coord:
    if isinstance(value, Coord):
        return value
    try:
        row, col = value
    except (TypeError, ValueError):
        raise ParseError(f"expected a [row, col] pair, got {value!r}") from None
    if not (isinstance(row, int) and isinstance(col, int)) or isinstance(row, bool) or isinstance(col, bool):
        raise ParseError(f"coordinates must be integers, got {value!r}")
    return Coord(row, col)


@dataclass(frozen=True)
class GridWorld:
    """Static map. ``start``/``dest`` may be ``None`` only for bare render tests;
    :func:`validate` reports that as a violation."""

    cells: tuple[tuple[Cell, ...], ...]
    start: Coord | None
    dest: Coord | None

    def __post_init__(self) -> None:
        cells = tuple(tuple(Cell(c) for c in row) for row in self.cells)
        if not cells or not cells[0]:
            raise ContractViolation("grid must have at least one row and column")
        if any(len(row) != len(cells[0]) for row in cells):
            raise ContractViolation("grid rows must all have the same width")
        object.__setattr__(self, "cells", cells)
        for name in ("start", "dest"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, as_coord(value))

    @property
    def height(self) -> int:
        return len(self.cells)

    @property
    def width(self) -> int:
        return len(self.cells[0])

    def in_bounds(self, pos: Coord) -> bool:
        return 0 <= pos[0] < self.height and 0 <= pos[1] < self.width

    def cell(self, pos: Coord) -> Cell:
        return self.cells[pos[0]][pos[1]]

    def coords(self, kind: Cell | None = None) -> list[Coord]:
        """All coordinates in row-major order, optionally filtered by cell kind."""
        return [
            Coord(r, c)
            for r in range(self.height)
            for c in range(self.width)
            if kind is None or self.cells[r][c] is kind
        ]

    def rows(self) -> tuple[str, ...]:
        return tuple("".join(c.value for c in row) for row in self.cells)

    @classmethod
    def from_rows(cls, rows: Sequence[str], start: Any = None, dest: Any = None) -> GridWorld:
        try:
            cells = tuple(tuple(Cell(ch) for ch in row) for row in rows)
        except ValueError as exc:
            raise ParseError(f"unknown cell symbol in grid rows: {exc}") from None
        return cls(cells, start, dest)

    @classmethod
    def empty(cls, height: int, width: int, start: Any = None, dest: Any = None) -> GridWorld:
        return cls.from_rows(["G" * width] * height, start, dest)

    def replace_cells(self, changes: dict[Coord, Cell]) -> GridWorld:
        grid = [list(row) for row in self.cells]
        for (r, c), kind in changes.items():
            grid[r][c] = kind
        return GridWorld(tuple(tuple(row) for row in grid), self.start, self.dest)


class MoveResult(NamedTuple):
    target: Coord
    blocked: bool


def neighbor(pos: Coord, action: Action, world: GridWorld) -> MoveResult:
    """One-step move; off-map and Wall targets are air walls (stay, blocked)."""
    if not world.in_bounds(pos):
        raise ContractViolation(f"position {pos} outside {world.height}x{world.width} grid")
    dr, dc = action.delta
    target = Coord(pos[0] + dr, pos[1] + dc)
    if not world.in_bounds(target) or world.cell(target) is Cell.WALL:
        return MoveResult(Coord(*pos), True)
    return MoveResult(target, False)


@dataclass(frozen=True)
class DynamicScenario:
    world: GridWorld
    lava_frames: tuple[frozenset[Coord], ...]

    def __post_init__(self) -> None:
        frames = tuple(frozenset(as_coord(c) for c in frame) for frame in self.lava_frames)
        if not frames:
            raise ContractViolation("a scenario needs at least the tick-0 lava frame")
        object.__setattr__(self, "lava_frames", frames)

    @property
    def horizon(self) -> int:
        return len(self.lava_frames) - 1

    def lava_at(self, t: int) -> frozenset[Coord]:
        if t < 0 or t > self.horizon:
            raise HorizonError(f"tick {t} outside horizon 0..{self.horizon}")
        return self.lava_frames[t]


def lava_at(scenario: DynamicScenario, t: int) -> frozenset[Coord]:
    return scenario.lava_at(t)


class Violation(NamedTuple):
    invariant: str
    where: Coord | int | None
    detail: str

    def __str__(self) -> str:
        loc = "" if self.where is None else f" at {self.where}"
        return f"{self.invariant}{loc}: {self.detail}"


def validate(scenario: DynamicScenario, step_limit: int | None = None) -> list[Violation]:
    """Check every world/scenario invariant. Returns violations instead of raising."""
    world = scenario.world
    out: list[Violation] = []
    if not (MIN_SIDE <= world.height <= MAX_SIDE and MIN_SIDE <= world.width <= MAX_SIDE):
        out.append(Violation("grid_size", None, f"{world.height}x{world.width} not within [{MIN_SIDE},{MAX_SIDE}]"))
    for name in ("start", "dest"):
        pos = getattr(world, name)
        if pos is None:
            out.append(Violation(f"{name}_present", None, f"{name} is missing"))
        elif not world.in_bounds(pos):
            out.append(Violation(f"{name}_in_bounds", pos, f"{name} lies outside the grid"))
        elif world.cell(pos) is not Cell.GRASS:
            out.append(Violation(f"{name}_on_grass", pos, f"{name} is on {world.cell(pos).name}"))
    if world.start is not None and world.start == world.dest:
        out.append(Violation("start_ne_dest", world.start, "start and destination coincide"))

    size = len(scenario.lava_frames[0])
    for t, frame in enumerate(scenario.lava_frames):
        if len(frame) != size:
            out.append(Violation("lava_count_constant", t, f"{len(frame)} lava cells, expected {size}"))
        for pos in sorted(frame):
            if not world.in_bounds(pos):
                out.append(Violation("lava_in_bounds", pos, f"lava outside grid at tick {t}"))
            elif world.cell(pos) is not Cell.GRASS:
                out.append(Violation("lava_on_grass", pos, f"lava on {world.cell(pos).name} at tick {t}"))
    if world.start is not None and world.start in scenario.lava_frames[0]:
        out.append(Violation("start_free_of_lava", world.start, "lava covers start at tick 0"))
    if step_limit is not None and scenario.horizon < step_limit:
        out.append(Violation("horizon_covers_limit", scenario.horizon, f"horizon below step limit {step_limit}"))
    return out


# -- serialization -----------------------------------------------------------

def coord_list(coords: Iterable[Coord]) -> list[list[int]]:
    return [[r, c] for r, c in sorted(coords)]


def world_to_dict(world: GridWorld) -> dict[str, Any]:
    return {
        "h": world.height,
        "w": world.width,
        "cells": list(world.rows()),
    }


def scenario_to_dict(scenario: DynamicScenario) -> dict[str, Any]:
    world = scenario.world
    return {
        "grid": world_to_dict(world),
        "start": None if world.start is None else list(world.start),
        "dest": None if world.dest is None else list(world.dest),
        "lava_frames": [coord_list(f) for f in scenario.lava_frames],
    }


def scenario_from_dict(doc: dict[str, Any]) -> DynamicScenario:
    try:
        grid = doc["grid"]
        rows = grid["cells"]
        if len(rows) != grid["h"] or any(len(r) != grid["w"] for r in rows):
            raise ParseError(f"grid: cells do not match declared size {grid['h']}x{grid['w']}")
        start = None if doc["start"] is None else as_coord(doc["start"])
        dest = None if doc["dest"] is None else as_coord(doc["dest"])
        world = GridWorld.from_rows(rows, start, dest)
        frames = tuple(frozenset(as_coord(c) for c in f) for f in doc["lava_frames"])
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ParseError(f"malformed scenario document: {exc}") from None
    return DynamicScenario(world, frames)


def actions_from_names(names: Iterable[str]) -> ActionSequence:
    try:
        return tuple(Action(n) for n in names)
    except ValueError as exc:
        raise ParseError(f"unknown action: {exc}") from None

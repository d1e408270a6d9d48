"""Scoring, aggregation and report tables.

Navigation answers are always scored by replaying them through the simulator,
never from what the model claims. Aggregation goes through integer counts so
that merging result sets is exact.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence, Union

from grassland.dynamics import outcome_to_choice, simulate
from grassland.errors import ContractViolation
from grassland.generator import Instance, Task
from grassland.prompts import ParsedAnswer
from grassland.world import Outcome

LETTERS = ("A", "B", "C", "D")
EMPTY_MARKER = "(empty report: no results)"


class NavStatus(str, Enum):
    ARRIVED = "arrived"
    FAILED = "failed"
    UNFINISHED = "unfinished"


@dataclass(frozen=True)
class JudgmentScore:
    instance_id: str
    correct: bool
    gold: str
    predicted: str | None


@dataclass(frozen=True)
class NavigationScore:
    instance_id: str
    status: NavStatus
    effective_steps: int | None  # tick of first arrival, only when arrived
    answer_steps: int | None  # declared route length, None when unparseable
    truncated: bool = False


Score = Union[JudgmentScore, NavigationScore]


def score_judgment(instance: Instance, answer: ParsedAnswer | None) -> JudgmentScore:
    if instance.task is not Task.JUDGMENT:
        raise ContractViolation(f"{instance.id} is not a judgment instance")
    gold = outcome_to_choice(instance.ground_truth)
    predicted = None if answer is None else answer.judgment
    return JudgmentScore(instance.id, predicted == gold, gold, predicted)


def score_navigation(instance: Instance, answer: ParsedAnswer | None) -> NavigationScore:
    """Replay the answered route. Routes longer than the step limit are cut to it."""
    if instance.task is not Task.NAVIGATION:
        raise ContractViolation(f"{instance.id} is not a navigation instance")
    route = None if answer is None else answer.navigation
    if route is None:
        return NavigationScore(instance.id, NavStatus.UNFINISHED, None, None)
    limit = instance.step_limit
    truncated = len(route) > limit
    trace = simulate(instance.scenario, route[:limit])
    if trace.outcome is Outcome.SUCCESS:
        return NavigationScore(instance.id, NavStatus.ARRIVED, trace.steps_executed, len(route), truncated)
    status = NavStatus.UNFINISHED if trace.outcome is Outcome.UNFINISHED else NavStatus.FAILED
    return NavigationScore(instance.id, status, None, len(route), truncated)


def score(instance: Instance, answer: ParsedAnswer | None) -> Score:
    if instance.task is Task.JUDGMENT:
        return score_judgment(instance, answer)
    return score_navigation(instance, answer)


# -- aggregation -----------------------------------------------------------------

@dataclass(frozen=True)
class JudgmentCounts:
    support: tuple[int, int, int, int] = (0, 0, 0, 0)
    correct: tuple[int, int, int, int] = (0, 0, 0, 0)

    def __add__(self, other: JudgmentCounts) -> JudgmentCounts:
        return JudgmentCounts(
            tuple(a + b for a, b in zip(self.support, other.support)),
            tuple(a + b for a, b in zip(self.correct, other.correct)),
        )


@dataclass(frozen=True)
class NavigationCounts:
    arrived: int = 0
    failed: int = 0
    unfinished: int = 0
    effective_total: int = 0
    answer_total: int = 0

    def __add__(self, other: NavigationCounts) -> NavigationCounts:
        return NavigationCounts(
            self.arrived + other.arrived,
            self.failed + other.failed,
            self.unfinished + other.unfinished,
            self.effective_total + other.effective_total,
            self.answer_total + other.answer_total,
        )


@dataclass(frozen=True)
class JudgmentMetrics:
    total_acc: float
    per_choice_acc: dict[str, float | None]  # None where the choice has no support
    support: dict[str, int]
    n: int


@dataclass(frozen=True)
class NavigationMetrics:
    arrived_pct: float
    failed_pct: float
    unfinished_pct: float
    ave_step_effective: float | None  # over arrived episodes
    ave_step_answer: float | None
    n: int


@dataclass(frozen=True)
class EmptyMetrics:
    marker: str = EMPTY_MARKER


EMPTY = EmptyMetrics()
Metrics = Union[JudgmentMetrics, NavigationMetrics, EmptyMetrics]


def count_judgment(scores: Iterable[JudgmentScore]) -> JudgmentCounts:
    support, correct = [0] * 4, [0] * 4
    for s in scores:
        i = LETTERS.index(s.gold)
        support[i] += 1
        correct[i] += int(s.correct)
    return JudgmentCounts(tuple(support), tuple(correct))


def count_navigation(scores: Iterable[NavigationScore]) -> NavigationCounts:
    out = NavigationCounts()
    for s in scores:
        if s.status is NavStatus.ARRIVED:
            out += NavigationCounts(1, 0, 0, s.effective_steps, s.answer_steps)
        elif s.status is NavStatus.FAILED:
            out += NavigationCounts(0, 1, 0)
        else:
            out += NavigationCounts(0, 0, 1)
    return out


def judgment_metrics(counts: JudgmentCounts) -> Metrics:
    n = sum(counts.support)
    if n == 0:
        return EMPTY
    per_choice = {
        letter: (c / s if s else None) for letter, s, c in zip(LETTERS, counts.support, counts.correct)
    }
    return JudgmentMetrics(sum(counts.correct) / n, per_choice, dict(zip(LETTERS, counts.support)), n)


def navigation_metrics(counts: NavigationCounts) -> Metrics:
    n = counts.arrived + counts.failed + counts.unfinished
    if n == 0:
        return EMPTY
    eff = counts.effective_total / counts.arrived if counts.arrived else None
    ans = counts.answer_total / counts.arrived if counts.arrived else None
    return NavigationMetrics(counts.arrived / n, counts.failed / n, counts.unfinished / n, eff, ans, n)


def aggregate(scores: Sequence[Score]) -> Metrics:
    if not scores:
        return EMPTY
    if all(isinstance(s, JudgmentScore) for s in scores):
        return judgment_metrics(count_judgment(scores))
    if all(isinstance(s, NavigationScore) for s in scores):
        return navigation_metrics(count_navigation(scores))
    raise ContractViolation("cannot aggregate judgment and navigation results together")


# -- reports ---------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    model: str
    method: str
    level: str
    metrics: Metrics


@dataclass(frozen=True)
class Report:
    task: Task
    rows: tuple[ReportRow, ...] = field(default_factory=tuple)


def _pct(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.1f}"


def _steps(x: float | None) -> str:
    return "-" if x is None else f"{x:.2f}"


def _header(task: Task) -> list[str]:
    if task is Task.JUDGMENT:
        return ["Model", "Method", "A", "B", "C", "D", "Total Acc.", "N"]
    return ["Model", "Method", "Arrived", "Failed", "Unfinished", "Ave. Step (Effective)", "Ave. Step (Answer)", "N"]


def _cells(row: ReportRow) -> list[str]:
    m = row.metrics
    if isinstance(m, JudgmentMetrics):
        return [row.model, row.method, *(_pct(m.per_choice_acc[k]) for k in LETTERS), _pct(m.total_acc), str(m.n)]
    if isinstance(m, NavigationMetrics):
        return [
            row.model,
            row.method,
            _pct(m.arrived_pct),
            _pct(m.failed_pct),
            _pct(m.unfinished_pct),
            _steps(m.ave_step_effective),
            _steps(m.ave_step_answer),
            str(m.n),
        ]
    return [row.model, row.method, m.marker]


def _levels(report: Report) -> list[str]:
    order = ["easy", "normal", "hard"]
    seen = {r.level for r in report.rows}
    return [lv for lv in order if lv in seen] + sorted(seen - set(order))


def emit(report: Report, fmt: str) -> bytes:
    """Render as ``csv``, ``markdown`` or ``json``. Deterministic for a given report."""
    if not report.rows:
        if fmt == "json":
            return (json.dumps({"task": report.task.value, "empty": True, "marker": EMPTY_MARKER}) + "\n").encode()
        return (EMPTY_MARKER + "\n").encode()
    header = _header(report.task)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["Level", *header])
        for level in _levels(report):
            for row in report.rows:
                if row.level == level:
                    writer.writerow([level, *_cells(row)])
        return buf.getvalue().encode()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
        for level in _levels(report):
            lines.append("| " + " | ".join([f"*{level.capitalize()} Level*"] + [""] * (len(header) - 1)) + " |")
            for row in report.rows:
                if row.level == level:
                    cells = _cells(row)
                    cells += [""] * (len(header) - len(cells))
                    lines.append("| " + " | ".join(cells) + " |")
        return ("\n".join(lines) + "\n").encode()
    if fmt == "json":
        doc = {"task": report.task.value, "rows": [_row_doc(r) for r in report.rows]}
        return (json.dumps(doc, indent=2) + "\n").encode()
    raise ContractViolation(f"unknown report format {fmt!r}")


def _row_doc(row: ReportRow) -> dict:
    m = row.metrics
    doc = {"model": row.model, "method": row.method, "level": row.level}
    if isinstance(m, EmptyMetrics):
        doc["empty"] = True
    else:
        doc.update({k: getattr(m, k) for k in m.__dataclass_fields__})
    return doc


def score_record(s: Score) -> dict:
    """One line of the per-episode results file."""
    if isinstance(s, JudgmentScore):
        return {"instance_id": s.instance_id, "correct": s.correct, "gold": s.gold, "predicted": s.predicted}
    return {
        "instance_id": s.instance_id,
        "status": s.status.value,
        "effective_steps": s.effective_steps,
        "answer_steps": s.answer_steps,
        "truncated": s.truncated,
    }

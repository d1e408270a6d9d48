"""Command-line pipeline: generate, render, run, score, oracle.

Everything lives under one output directory::

    OUT/instances/<id>.json, manifest.jsonl, generate.json
    OUT/frames/<id>/frame_<tttt>.png, video.gif
    OUT/runs/<run>/manifest.json, episodes.jsonl, episodes/<id>/...
    OUT/runs/<run>/results.jsonl, report.<ext>

Exit codes: 2 configuration, 3 generation or data integrity, 4 transport,
5 scoring.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

from grassland import __version__
from grassland.d2r.loop import RUN_METHODS, EpisodeResult, LoopOptions, persist_episode, run_batch
from grassland.d2r.reasoners import API_KEY_ENV, OracleReasoner, Reasoner, RemoteReasoner, RuleHub, ScriptedReasoner
from grassland.errors import (
    ConfigError,
    GenerationError,
    GrasslandError,
    IntegrityError,
    ParseError,
    ScoringError,
    TransportError,
)
from grassland.evaluation import Report, ReportRow, aggregate, emit, score, score_record
from grassland.generator import (
    Instance,
    Level,
    Task,
    check_instance,
    difficulty,
    export_instances,
    generate_batch,
    import_instances,
)
from grassland.prompts import ParsedAnswer, default_frame_count
from grassland.render import DEFAULT_CELL_PX, Frame, read_frames, write_frames
from grassland.world import actions_from_names

log = logging.getLogger("grassland")

EXIT_CONFIG, EXIT_GENERATION, EXIT_TRANSPORT, EXIT_SCORING = 2, 3, 4, 5
REPORT_EXT = {"csv": "csv", "markdown": "md", "json": "json"}


@dataclass(frozen=True)
class Endpoint:
    base_url: str | None = None
    mllm_model: str | None = None
    hub_model: str | None = None


@dataclass(frozen=True)
class Timeouts:
    request: float = 60.0
    retries: int = 3
    min_interval: float = 0.0


@dataclass(frozen=True)
class RenderSettings:
    cell_px: int = DEFAULT_CELL_PX
    frames: int | None = None  # None: per-instance default


@dataclass(frozen=True)
class RunConfig:
    task: str = "navigation"
    level: str = "easy"
    count: int = 100
    master_seed: int = 0
    out_dir: str = "out"
    method: str = "d2r"
    reasoner: str = "oracle"
    hub: str | None = None  # "rule" or "remote"; default follows the reasoner
    endpoint: Endpoint = field(default_factory=Endpoint)
    parallelism: int = 1
    timeouts: Timeouts = field(default_factory=Timeouts)
    render: RenderSettings = field(default_factory=RenderSettings)
    no_text: bool = False
    no_draft: bool = False
    report_format: str = "markdown"
    resume: bool = False

    def validate(self) -> RunConfig:
        def check(ok: bool, msg: str) -> None:
            if not ok:
                raise ConfigError(msg)

        check(self.task in {t.value for t in Task}, f"unknown task {self.task!r}")
        check(self.level in {lv.value for lv in Level}, f"unknown level {self.level!r}")
        check(self.count >= 1, "count must be positive")
        check(self.method in RUN_METHODS, f"unknown method {self.method!r}")
        check(
            self.reasoner in ("oracle", "remote") or self.reasoner.startswith("scripted:"),
            f"unknown reasoner {self.reasoner!r}; expected remote, oracle or scripted:<file>",
        )
        check(self.hub in (None, "rule", "remote"), f"unknown hub {self.hub!r}")
        check(self.parallelism >= 1, "parallelism must be at least 1")
        check(self.render.cell_px >= 8, "cell_px must be at least 8")
        check(self.render.frames is None or self.render.frames >= 1, "frames must be positive")
        check(self.timeouts.request > 0 and self.timeouts.retries >= 0, "bad timeouts")
        check(self.report_format in REPORT_EXT, f"unknown report format {self.report_format!r}")
        check(not (self.method != "d2r" and (self.no_text or self.no_draft)), "ablation flags apply to d2r only")
        return self

    @property
    def hub_kind(self) -> str | None:
        """Hub backend for d2r runs; single-call methods use none."""
        if self.method != "d2r":
            return None
        return self.hub or ("remote" if self.reasoner == "remote" else "rule")

    @property
    def run_name(self) -> str:
        suffix = "".join(s for s, on in (("-no-text", self.no_text), ("-no-draft", self.no_draft)) if on)
        return f"{self.method}{suffix}"

    @property
    def model_name(self) -> str:
        if self.reasoner == "remote":
            return self.endpoint.mllm_model or "remote"
        return self.reasoner.split(":", 1)[0]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> RunConfig:
        nested = {"endpoint": Endpoint, "timeouts": Timeouts, "render": RenderSettings}
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in doc.items():
            if key in nested:
                if not isinstance(value, dict):
                    raise ConfigError(f"config key {key!r} must be an object")
                try:
                    value = nested[key](**value)
                except TypeError as exc:
                    raise ConfigError(f"config key {key!r}: {exc}") from None
            kwargs[key] = value
        return cls(**kwargs)


# -- argument handling ------------------------------------------------------------

_FLAT = {
    "task": "task",
    "level": "level",
    "count": "count",
    "seed": "master_seed",
    "out": "out_dir",
    "method": "method",
    "reasoner": "reasoner",
    "hub": "hub",
    "parallelism": "parallelism",
    "no_text": "no_text",
    "no_draft": "no_draft",
    "format": "report_format",
    "resume": "resume",
}
_NESTED = {
    "base_url": ("endpoint", "base_url"),
    "mllm_model": ("endpoint", "mllm_model"),
    "hub_model": ("endpoint", "hub_model"),
    "timeout": ("timeouts", "request"),
    "retries": ("timeouts", "retries"),
    "min_interval": ("timeouts", "min_interval"),
    "cell_px": ("render", "cell_px"),
    "frames": ("render", "frames"),
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the ``--config`` file, then explicit flags."""
    doc: dict[str, Any] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
    cfg = RunConfig.from_dict(doc)
    for flag, key in _FLAT.items():
        value = getattr(args, flag, None)
        if value is not None and value is not False:
            cfg = replace(cfg, **{key: value})
    for flag, (group, key) in _NESTED.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg = replace(cfg, **{group: replace(getattr(cfg, group), **{key: value})})
    return cfg.validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grassland", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON run configuration; flags override it")
        p.add_argument("--out", help="output directory (default: out)")

    p = sub.add_parser("generate", help="sample seeded benchmark instances")
    common(p)
    p.add_argument("--task", choices=[t.value for t in Task])
    p.add_argument("--level", choices=[lv.value for lv in Level])
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int, help="master seed")

    p = sub.add_parser("render", help="render frame trees for generated instances")
    common(p)
    p.add_argument("--cell-px", dest="cell_px", type=int)
    p.add_argument("--frames", type=int, help="frames per video (default: per task)")

    p = sub.add_parser("run", help="run a method over the rendered instances")
    common(p)
    p.add_argument("--method", choices=RUN_METHODS)
    p.add_argument("--reasoner", help="remote | oracle | scripted:<file>")
    p.add_argument("--hub", choices=["rule", "remote"], help="scheduling hub for d2r")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--no-text", dest="no_text", action="store_true", help="drop prior thought texts")
    p.add_argument("--no-draft", dest="no_draft", action="store_true", help="drop draft images")
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--mllm-model", dest="mllm_model")
    p.add_argument("--hub-model", dest="hub_model")
    p.add_argument("--timeout", type=float, help="per-request timeout in seconds")
    p.add_argument("--retries", type=int)
    p.add_argument("--min-interval", dest="min_interval", type=float, help="seconds between request starts")
    p.add_argument("--resume", action="store_true", help="skip episodes that already completed")

    p = sub.add_parser("score", help="score a run and write the report")
    common(p)
    p.add_argument("--method", choices=RUN_METHODS)
    p.add_argument("--no-text", dest="no_text", action="store_true")
    p.add_argument("--no-draft", dest="no_draft", action="store_true")
    p.add_argument("--format", choices=list(REPORT_EXT))

    p = sub.add_parser("oracle", help="re-derive every ground truth and report differences")
    common(p)
    return parser


# -- commands ---------------------------------------------------------------------

def _paths(cfg: RunConfig) -> tuple[Path, Path, Path]:
    out = Path(cfg.out_dir)
    return out / "instances", out / "frames", out / "runs" / cfg.run_name


def _load_instances(cfg: RunConfig) -> list[Instance]:
    inst_dir, _, _ = _paths(cfg)
    if not (inst_dir / "manifest.jsonl").exists():
        raise ConfigError(f"no instances in {inst_dir}; run `grassland generate` first")
    return import_instances(inst_dir)


def _write_json(path: Path, doc: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def cmd_generate(cfg: RunConfig) -> list[Instance]:
    inst_dir, _, _ = _paths(cfg)
    instances = generate_batch(difficulty(cfg.task, cfg.level), cfg.count, cfg.master_seed)
    for stale in inst_dir.glob("*.json"):
        stale.unlink()
    export_instances(instances, inst_dir)
    _write_json(inst_dir / "generate.json", {"version": __version__, "config": cfg.to_dict()})
    print(f"generated {len(instances)} {cfg.task}-{cfg.level} instances in {inst_dir}")
    return instances


def _frame_count(cfg: RunConfig, inst: Instance) -> int:
    return cfg.render.frames or default_frame_count(inst)


def cmd_render(cfg: RunConfig) -> int:
    instances = _load_instances(cfg)
    _, frame_dir, _ = _paths(cfg)
    for inst in instances:
        target = frame_dir / inst.id
        for stale in target.glob("frame_*.png"):
            stale.unlink()
        write_frames(inst.scenario, target, _frame_count(cfg, inst), cfg.render.cell_px)
    _write_json(frame_dir / "render.json", {"version": __version__, "render": asdict(cfg.render)})
    print(f"rendered {len(instances)} videos into {frame_dir}")
    return len(instances)


def _load_script(path: str) -> Any:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read script {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if isinstance(doc, list) and all(isinstance(r, str) for r in doc):
        return doc
    if isinstance(doc, dict) and all(isinstance(v, list) for v in doc.values()):
        return doc
    raise ConfigError(f"{path}: script must be a list of replies or an object of id -> replies")


def _remote(cfg: RunConfig, model: str | None, role: str) -> RemoteReasoner:
    if not cfg.endpoint.base_url or not model:
        raise ConfigError(f"remote {role} needs --base-url and a model name")
    return RemoteReasoner(
        cfg.endpoint.base_url,
        model,
        timeout=cfg.timeouts.request,
        retries=cfg.timeouts.retries,
        min_interval=cfg.timeouts.min_interval,
    )


def make_reasoners(cfg: RunConfig, instances: Sequence[Instance]) -> tuple[Reasoner, Reasoner | None]:
    if cfg.reasoner == "oracle":
        mllm: Reasoner = OracleReasoner(instances)
    elif cfg.reasoner == "remote":
        mllm = _remote(cfg, cfg.endpoint.mllm_model, "reasoner")
    else:
        mllm = ScriptedReasoner(_load_script(cfg.reasoner.split(":", 1)[1]))
    hub: Reasoner | None = None
    if cfg.hub_kind == "remote":
        hub = _remote(cfg, cfg.endpoint.hub_model, "hub")
    elif cfg.hub_kind == "rule":
        hub = RuleHub()
    return mllm, hub


def _recorded_render(cfg: RunConfig) -> RenderSettings:
    """Settings the frames on disk were rendered with; runs always follow them."""
    _, frame_dir, _ = _paths(cfg)
    path = frame_dir / "render.json"
    if not path.exists():
        raise ConfigError(f"no rendered frames in {frame_dir}; run `grassland render` first")
    try:
        return RenderSettings(**json.loads(path.read_text(encoding="utf-8"))["render"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: unreadable render record ({exc})") from None


def _load_base_frames(cfg: RunConfig, instances: Sequence[Instance]) -> dict[str, tuple[Frame, ...]]:
    _, frame_dir, _ = _paths(cfg)
    out = {}
    for inst in instances:
        frames = read_frames(frame_dir / inst.id, cfg.render.cell_px)
        if not frames:
            raise ConfigError(f"no frames for {inst.id} in {frame_dir}; run `grassland render` first")
        expected = _frame_count(cfg, inst)
        if len(frames) != expected:
            raise ConfigError(f"{inst.id}: found {len(frames)} frames, expected {expected}; re-run `grassland render`")
        out[inst.id] = tuple(frames)
    return out


def _completed(run_dir: Path) -> dict[str, dict]:
    path = run_dir / "episodes.jsonl"
    if not path.exists():
        return {}
    done = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            if rec.get("error") is None:
                done[rec["instance_id"]] = rec
    return done


def cmd_run(cfg: RunConfig) -> list[dict]:
    if "remote" in (cfg.reasoner, cfg.hub_kind) and not os.environ.get(API_KEY_ENV):
        raise ConfigError(f"remote reasoner needs an API key in ${API_KEY_ENV}")
    instances = _load_instances(cfg)
    cfg = replace(cfg, render=_recorded_render(cfg))
    frames = _load_base_frames(cfg, instances)
    mllm, hub = make_reasoners(cfg, instances)
    _, _, run_dir = _paths(cfg)
    previous = _completed(run_dir) if cfg.resume else {}
    todo = [i for i in instances if i.id not in previous]
    _write_json(run_dir / "manifest.json", {"version": __version__, "config": cfg.to_dict()})

    options = LoopOptions(cell_px=cfg.render.cell_px, frames=cfg.render.frames, no_text=cfg.no_text, no_draft=cfg.no_draft)
    results: list[EpisodeResult] = run_batch(
        todo, cfg.method, mllm, hub, options, cfg.parallelism, frames_for=lambda inst: frames[inst.id]
    )
    fresh = {}
    for res in results:
        persist_episode(res, run_dir / "episodes" / res.instance_id)
        fresh[res.instance_id] = res.record()
    records = [previous.get(i.id) or fresh[i.id] for i in instances]
    (run_dir / "episodes.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")

    errored = [r for r in records if r["error"] is not None]
    print(f"ran {len(todo)} episodes ({len(previous)} resumed) with {cfg.run_name}; {len(errored)} errored")
    for rec in errored:
        print(f"  {rec['instance_id']}: {rec['error']}", file=sys.stderr)
    if errored and all(r["error"] is not None for r in records):
        raise TransportError(f"every episode failed; first error: {errored[0]['error']}")
    return records


def _answer_from_record(rec: dict) -> ParsedAnswer | None:
    ans = rec.get("answer")
    if ans is None:
        return None
    nav = ans.get("navigation")
    return ParsedAnswer(ans.get("raw", ""), ans.get("judgment"), None if nav is None else actions_from_names(nav))


def _run_config(run_dir: Path) -> RunConfig:
    path = run_dir / "manifest.json"
    try:
        return RunConfig.from_dict(json.loads(path.read_text(encoding="utf-8"))["config"])
    except (OSError, ValueError, KeyError, TypeError, ConfigError) as exc:
        raise ScoringError(f"{path}: unreadable run manifest ({exc})") from None


def cmd_score(cfg: RunConfig) -> bytes:
    instances = {i.id: i for i in _load_instances(cfg)}
    _, _, run_dir = _paths(cfg)
    path = run_dir / "episodes.jsonl"
    if not path.exists():
        raise ScoringError(f"no episode records at {path}; run `grassland run` first")
    try:
        records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise ScoringError(f"{path}:{exc.lineno}: {exc.msg}") from None
    tasks = {i.task for i in instances.values()}
    if len(tasks) != 1:
        raise ScoringError("instance set mixes tasks; score each task separately")

    scores_by_level: dict[str, list] = {}
    results = []
    for rec in records:
        inst = instances.get(rec.get("instance_id"))
        if inst is None:
            raise ScoringError(f"record for unknown instance {rec.get('instance_id')!r}")
        try:
            s = score(inst, _answer_from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScoringError(f"{inst.id}: malformed answer record ({exc})") from None
        scores_by_level.setdefault(inst.level.value, []).append(s)
        results.append({**score_record(s), "level": inst.level.value, "error": rec.get("error")})

    (run_dir / "results.jsonl").write_text("".join(json.dumps(r) + "\n" for r in results), encoding="utf-8")
    model = _run_config(run_dir).model_name  # the reasoner that produced the records
    rows = tuple(ReportRow(model, cfg.run_name, lv, aggregate(s)) for lv, s in scores_by_level.items())
    report = emit(Report(tasks.pop(), rows), cfg.report_format)
    (run_dir / f"report.{REPORT_EXT[cfg.report_format]}").write_bytes(report)
    sys.stdout.write(report.decode())
    return report


def cmd_oracle(cfg: RunConfig) -> list[str]:
    """Re-check every stored ground truth against the simulator and planner."""
    instances = _load_instances(cfg)
    diffs = [f"{inst.id}: {p}" for inst in instances for p in check_instance(inst)]
    for d in diffs:
        print(d)
    print(f"checked {len(instances)} instances: {len(diffs)} differences")
    if diffs:
        raise IntegrityError(f"{len(diffs)} ground-truth differences")
    return diffs


COMMANDS = {"generate": cmd_generate, "render": cmd_render, "run": cmd_run, "score": cmd_score, "oracle": cmd_oracle}


def exit_code(exc: GrasslandError) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, TransportError):
        return EXIT_TRANSPORT
    if isinstance(exc, ScoringError):
        return EXIT_SCORING
    if isinstance(exc, (GenerationError, IntegrityError, ParseError)):
        return EXIT_GENERATION
    return 1


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except GrasslandError as exc:
        kind = type(exc).__name__
        print(f"grassland {args.command}: {kind}: {exc}", file=sys.stderr)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())

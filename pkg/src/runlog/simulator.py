"""Deterministic stand-in for the data-taking system.

Generates a seeded, internally consistent corpus of fills, runs,
reconstruction passes and log entries, and replays it against a live
service (the machine-to-machine path) or directly into a store.

Randomness is Python's Mersenne Twister (``random.Random(seed)``), which
is stable across platforms and interpreter versions, so one SimConfig
always produces one dataset. Per-fill run counts are drawn as
``min(1 + Poisson(mean_runs_per_fill - 1), 200)``: the +1 guarantees a
fill groups at least one run and the Poisson tail keeps corpus-level
ratios tight around their configured means.
"""

from __future__ import annotations

import math
import random
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import httpx

from runlog.canonical import canonical_json
from runlog.domain import (
    ActorRef,
    ActorRole,
    EndRun,
    EntityRef,
    LhcFill,
    LogOrigin,
    ReconstructionPass,
    RefKind,
    Run,
    RunQuality,
    RunState,
    RunType,
    SetQuality,
    Template,
    new_log_entry,
    render_template,
)
from runlog.errors import ConnectionFailed, RunlogError
from runlog.store import HEADER, Store

SIM_ACTOR = ActorRef(actor_id="simulator", role=ActorRole.MACHINE)

_BASE_TIME = datetime(2022, 1, 1, tzinfo=timezone.utc)
_MAX_RUNS_PER_FILL = 200

_DETECTOR_TAGS = ("tpc", "its", "mft", "tof", "trd", "emcal")
_EXTRA_TAGS = ("physics", "cosmics", "calibration", "test", "noise")
_BEAM_TYPES = ("Pb-Pb", "p-p", "p-Pb")
_LOG_TITLES = (
    "Shift handover notes",
    "Trigger rate drop observed",
    "DCS warning acknowledged",
    "Gas mixture adjusted",
    "High voltage trip recovered",
)
_LOG_BODIES = (
    "Conditions stable, nothing to report.",
    "Observed a transient spike, detector recovered without intervention.",
    "Followed the standard checklist, all items green.",
    "Experts notified, monitoring continues.",
)

EOS_TEMPLATE = Template(
    template_name="eos",
    title_pattern="EOS report {{shift}}",
    body_pattern="Shift {{shift}} summary for {{detector}}.\n{{notes}}",
    required_fields=frozenset({"shift", "detector"}),
    default_tags=frozenset({"eos"}),
)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 42
    n_fills: int = 10
    mean_runs_per_fill: float = 56.0
    p_run_without_fill: float = 0.05
    duration_range_s: tuple[float, float] = (180.0, 108000.0)
    p_pass_per_run: float = 0.3
    max_pass_chain: int = 3
    logs_per_run: float = 0.7

    def __post_init__(self):
        for name in ("p_run_without_fill", "p_pass_per_run"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {value}")
        if self.n_fills < 0:
            raise ValueError("n_fills must be non-negative")
        if self.mean_runs_per_fill <= 0:
            raise ValueError("mean_runs_per_fill must be positive")
        if self.max_pass_chain <= 0:
            raise ValueError("max_pass_chain must be positive")
        if self.logs_per_run < 0:
            raise ValueError("logs_per_run must be non-negative")


@dataclass(frozen=True)
class SimLog:
    """A log entry to create; either direct content or a template reference."""

    created_at: datetime
    associations: tuple[EntityRef, ...]
    tags: tuple[str, ...]
    title: str | None = None
    body: str = ""
    template_name: str | None = None
    values: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SimDataset:
    config: SimConfig
    fills: tuple[LhcFill, ...]
    runs: tuple[Run, ...]
    passes: tuple[ReconstructionPass, ...]
    logs: tuple[SimLog, ...]
    templates: tuple[Template, ...]

    def counts(self) -> dict[str, int]:
        return {
            "fills": len(self.fills),
            "runs": len(self.runs),
            "passes": len(self.passes),
            "logs": len(self.logs),
        }

    def serialize(self) -> str:
        """Render the dataset in the store export format (no audit section)."""
        lines = [HEADER]
        for fill in self.fills:
            lines.append(f"FILL\t{canonical_json(fill.to_dict())}")
        for run in self.runs:
            lines.append(f"RUN\t{canonical_json(run.to_dict())}")
        for rec in self.passes:
            lines.append(f"PASS\t{canonical_json(rec.to_dict())}")
        templates = {t.template_name: t for t in self.templates}
        for log_id, sim_log in enumerate(self.logs, start=1):
            entry = _materialize_log(log_id, sim_log, templates)
            lines.append(f"LOG\t{canonical_json(entry.to_dict())}")
        for template_id, template in enumerate(self.templates, start=1):
            record = {"template_id": template_id, **template.to_dict()}
            lines.append(f"TEMPLATE\t{canonical_json(record)}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ApiTarget:
    """Replay over HTTP with a machine token; `client` injectable for tests.

    ``concurrency`` > 1 issues independent requests in parallel while still
    respecting dependency order: fills before their runs, a run before its
    events and passes, chain links in sequence, maps before logs. Leave it
    at 1 for injected clients that are not thread-safe.
    """

    endpoint: str
    token: str
    client: httpx.Client | None = None
    concurrency: int = 1


@dataclass(frozen=True)
class DirectTarget:
    store: Store
    actor: ActorRef = SIM_ACTOR


@dataclass
class ReplayReport:
    requests: int = 0
    failures: list[str] = field(default_factory=list)
    elapsed_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "requests": self.requests,
            "failures": list(self.failures),
            "elapsed_s": round(self.elapsed_s, 3),
        }


def _poisson(rng: random.Random, mean: float) -> int:
    """Knuth's multiplication method; fine for the means used here."""
    if mean <= 0:
        return 0
    threshold = math.exp(-mean)
    count, product = 0, rng.random()
    while product > threshold:
        count += 1
        product *= rng.random()
    return count


def _log_uniform(rng: random.Random, lo: float, hi: float) -> float:
    return math.exp(rng.uniform(math.log(lo), math.log(hi)))


def generate(config: SimConfig) -> SimDataset:
    """Pure function of the config: same seed, same dataset."""
    rng = random.Random(config.seed)
    fills: list[LhcFill] = []
    raw_runs: list[dict] = []

    cursor = _BASE_TIME
    for fill_number in range(1, config.n_fills + 1):
        created_at = cursor
        sb_start = cursor + timedelta(hours=rng.uniform(0.5, 2.0))
        sb_end = sb_start + timedelta(hours=rng.uniform(4.0, 16.0))
        fills.append(
            LhcFill(
                fill_number=fill_number,
                beam_type=rng.choice(_BEAM_TYPES),
                created_at=created_at,
                stable_beams_start=sb_start,
                stable_beams_end=sb_end,
            )
        )
        n_runs = min(1 + _poisson(rng, config.mean_runs_per_fill - 1.0), _MAX_RUNS_PER_FILL)
        run_start = sb_start
        for _ in range(n_runs):
            duration = _log_uniform(rng, *config.duration_range_s)
            raw_runs.append(_draw_run(rng, run_start, duration, fill_number))
            run_start += timedelta(seconds=duration + rng.uniform(30.0, 600.0))
        cursor = max(sb_end, run_start) + timedelta(hours=rng.uniform(1.0, 6.0))

    with_fill = len(raw_runs)
    if config.p_run_without_fill > 0 and with_fill:
        span = (cursor - _BASE_TIME).total_seconds()
        n_without = round(with_fill * config.p_run_without_fill / (1.0 - config.p_run_without_fill))
        for _ in range(n_without):
            start = _BASE_TIME + timedelta(seconds=rng.uniform(0.0, span))
            duration = _log_uniform(rng, *config.duration_range_s)
            raw_runs.append(_draw_run(rng, start, duration, None, standalone=True))

    # Number runs chronologically, the way a live system would allocate them.
    raw_runs.sort(key=lambda r: r["start"])
    runs = tuple(
        Run(
            run_number=number,
            run_type=raw["type"],
            state=RunState.ENDED,
            start_time=raw["start"],
            end_time=raw["start"] + timedelta(seconds=raw["duration"]),
            fill_number=raw["fill"],
            configuration=raw["configuration"],
            quality=raw["quality"],
            tags=frozenset(raw["tags"]),
        )
        for number, raw in enumerate(raw_runs, start=1)
    )

    passes = _draw_passes(rng, runs, config)
    logs = _draw_logs(rng, runs, config)
    templates = (EOS_TEMPLATE,) if any(l.template_name for l in logs) else ()
    return SimDataset(
        config=config,
        fills=tuple(fills),
        runs=runs,
        passes=tuple(passes),
        logs=tuple(logs),
        templates=templates,
    )


def _draw_run(rng, start, duration, fill_number, standalone=False) -> dict:
    if standalone:
        run_type = rng.choice((RunType.COSMICS, RunType.DETECTOR_CALIBRATION, RunType.TECHNICAL))
        tags = {rng.choice(_EXTRA_TAGS)}
    else:
        run_type = RunType.GLOBAL if rng.random() < 0.9 else rng.choice(
            (RunType.DETECTOR_CALIBRATION, RunType.TECHNICAL)
        )
        tags = set()
        if rng.random() < 0.6:
            tags.add(rng.choice(_DETECTOR_TAGS))
        if rng.random() < 0.3:
            tags.add(rng.choice(_EXTRA_TAGS))
    roll = rng.random()
    quality = RunQuality.GOOD if roll < 0.7 else RunQuality.BAD if roll < 0.8 else RunQuality.UNKNOWN
    return {
        "start": start,
        "duration": duration,
        "fill": fill_number,
        "type": run_type,
        "quality": quality,
        "tags": tags,
        "configuration": {
            "trigger": rng.choice(("minimum-bias", "central", "muon")),
            "readout": f"v{rng.randint(1, 4)}.{rng.randint(0, 9)}",
        },
    }


def _draw_passes(rng, runs, config) -> list[ReconstructionPass]:
    passes: list[ReconstructionPass] = []
    for run in runs:
        if rng.random() >= config.p_pass_per_run:
            continue
        depth = rng.randint(1, config.max_pass_chain)
        previous: EntityRef = EntityRef(RefKind.RUN, run.run_number)
        created = run.end_time + timedelta(hours=rng.uniform(2.0, 48.0))
        for level in range(1, depth + 1):
            roll = rng.random()
            status = (
                "DONE" if roll < 0.8 else "RUNNING" if roll < 0.9 else
                "FAILED" if roll < 0.95 else "PENDING"
            )
            rec = ReconstructionPass(
                pass_id=len(passes) + 1,
                name=f"apass{level}",
                input=previous,
                status=status,
                created_at=created,
                configuration={"software": f"rec-v{rng.randint(10, 30)}"},
            )
            passes.append(rec)
            previous = EntityRef(RefKind.PASS, rec.pass_id)
            created += timedelta(hours=rng.uniform(6.0, 72.0))
    return passes


def _draw_logs(rng, runs, config) -> list[SimLog]:
    logs: list[SimLog] = []
    shifts = ("morning", "afternoon", "night")
    for run in runs:
        for _ in range(_poisson(rng, config.logs_per_run)):
            created = run.start_time + timedelta(
                seconds=rng.uniform(0.0, max((run.end_time - run.start_time).total_seconds(), 60.0))
            )
            associations: tuple[EntityRef, ...] = (EntityRef(RefKind.RUN, run.run_number),)
            if run.fill_number is not None and rng.random() < 0.3:
                associations += (EntityRef(RefKind.FILL, run.fill_number),)
            if rng.random() < 0.4:
                logs.append(
                    SimLog(
                        created_at=created,
                        associations=associations,
                        tags=(),
                        template_name=EOS_TEMPLATE.template_name,
                        values={
                            "shift": rng.choice(shifts),
                            "detector": rng.choice(_DETECTOR_TAGS),
                            "notes": rng.choice(_LOG_BODIES),
                        },
                    )
                )
            else:
                tags = (rng.choice(_DETECTOR_TAGS),) if rng.random() < 0.5 else ()
                logs.append(
                    SimLog(
                        created_at=created,
                        associations=associations,
                        tags=tags,
                        title=rng.choice(_LOG_TITLES),
                        body=rng.choice(_LOG_BODIES),
                    )
                )
    return logs


def _materialize_log(log_id: int, sim_log: SimLog, templates: dict[str, Template]):
    if sim_log.template_name is not None:
        rendered = render_template(templates[sim_log.template_name], sim_log.values)
        title, body = rendered.title, rendered.body
        tags = set(sim_log.tags) | set(rendered.tags)
    else:
        title, body, tags = sim_log.title, sim_log.body, set(sim_log.tags)
    return new_log_entry(
        log_id=log_id,
        title=title,
        body=body,
        author=SIM_ACTOR,
        origin=LogOrigin.PROCESS,
        created_at=sim_log.created_at,
        associations=sim_log.associations,
        tags=tags,
    )


def replay(dataset: SimDataset, target: ApiTarget | DirectTarget) -> ReplayReport:
    """Create the dataset's entities in dependency order.

    Per-request errors are collected in the report; an unreachable API
    endpoint raises ConnectionFailed instead.
    """
    started = time.monotonic()
    if isinstance(target, DirectTarget):
        report = _replay_direct(dataset, target)
    else:
        report = _replay_api(dataset, target)
    report.elapsed_s = time.monotonic() - started
    return report


def _replay_direct(dataset: SimDataset, target: DirectTarget) -> ReplayReport:
    store, actor = target.store, target.actor
    report = ReplayReport()
    templates = {t.template_name: t for t in dataset.templates}
    run_map: dict[int, int] = {}
    pass_map: dict[int, int] = {}

    def attempt(label: str, fn):
        report.requests += 1
        try:
            return fn()
        except RunlogError as exc:
            report.failures.append(f"{label}: {exc}")
            return None

    for template in dataset.templates:
        attempt(
            f"template {template.template_name}",
            lambda t=template: store.create_template(
                t.template_name,
                t.title_pattern,
                t.body_pattern,
                required_fields=t.required_fields,
                default_tags=t.default_tags,
                actor=actor,
            ),
        )
    for fill in dataset.fills:
        attempt(
            f"fill {fill.fill_number}",
            lambda f=fill: store.create_fill(
                f.fill_number,
                f.beam_type,
                stable_beams_start=f.stable_beams_start,
                stable_beams_end=f.stable_beams_end,
                actor=actor,
            ),
        )
    for run in dataset.runs:
        created = attempt(
            f"run {run.run_number}",
            lambda r=run: store.create_run(
                r.run_type,
                start_time=r.start_time,
                fill_number=r.fill_number,
                configuration=r.configuration,
                tags=r.tags,
                actor=actor,
            ),
        )
        if created is None:
            continue
        run_map[run.run_number] = created.run_number
        if run.state is RunState.ENDED:
            attempt(
                f"end run {run.run_number}",
                lambda r=run, n=created.run_number: store.mutate_run(
                    n, EndRun(r.end_time), actor=actor
                ),
            )
        if run.quality is not RunQuality.UNKNOWN:
            attempt(
                f"quality run {run.run_number}",
                lambda r=run, n=created.run_number: store.mutate_run(
                    n, SetQuality(r.quality), actor=actor
                ),
            )
    for rec in dataset.passes:
        ref = _remap_ref(rec.input, run_map, pass_map)
        if ref is None:
            report.failures.append(f"pass {rec.pass_id}: dependency was not created")
            continue
        created = attempt(
            f"pass {rec.pass_id}",
            lambda p=rec, r=ref: store.create_pass(p.name, r, p.configuration, actor=actor),
        )
        if created is None:
            continue
        pass_map[rec.pass_id] = created.pass_id
        if rec.status is not created.status:
            attempt(
                f"status pass {rec.pass_id}",
                lambda p=rec, n=created.pass_id: store.set_pass_status(
                    n, p.status, actor=actor
                ),
            )
    for index, sim_log in enumerate(dataset.logs, start=1):
        refs = [_remap_ref(r, run_map, pass_map) for r in sim_log.associations]
        if any(r is None for r in refs):
            report.failures.append(f"log {index}: dependency was not created")
            continue
        if sim_log.template_name is not None:
            rendered = render_template(templates[sim_log.template_name], sim_log.values)
            title, body = rendered.title, rendered.body
            tags = set(sim_log.tags) | set(rendered.tags)
        else:
            title, body, tags = sim_log.title, sim_log.body, set(sim_log.tags)
        attempt(
            f"log {index}",
            lambda t=title, b=body, rs=refs, tg=tags: store.create_log(
                t, b, rs, tg, actor=actor
            ),
        )
    return report


def _replay_api(dataset: SimDataset, target: ApiTarget) -> ReplayReport:
    report = ReplayReport()
    own_client = target.client is None
    client = target.client or httpx.Client(base_url=target.endpoint, timeout=30.0)
    headers = {"Authorization": f"Bearer {target.token}"}
    run_map: dict[int, int] = {}
    pass_map: dict[int, int] = {}
    lock = threading.Lock()
    concurrency = max(1, target.concurrency)

    def call(method: str, path: str, **kwargs):
        with lock:
            report.requests += 1
        try:
            response = client.request(method, path, headers=headers, **kwargs)
        except httpx.TransportError as exc:
            raise ConnectionFailed(f"{method} {path}: {exc}") from exc
        if response.status_code >= 300:
            with lock:
                report.failures.append(
                    f"{method} {path} -> {response.status_code} {response.text[:120]}"
                )
            return None
        return response.json()

    def skip(message: str) -> None:
        with lock:
            report.failures.append(message)

    def create_template(template: Template):
        call(
            "POST",
            "/api/v1/templates",
            json={
                "template_name": template.template_name,
                "title_pattern": template.title_pattern,
                "body_pattern": template.body_pattern,
                "required_fields": sorted(template.required_fields),
                "default_tags": sorted(template.default_tags),
            },
        )

    def create_fill(fill: LhcFill):
        record = fill.to_dict()
        call(
            "POST",
            "/api/v1/fills",
            json={
                "fill_number": fill.fill_number,
                "beam_type": fill.beam_type,
                "stable_beams_start": record["stable_beams_start"],
                "stable_beams_end": record["stable_beams_end"],
            },
        )

    def create_run(run: Run):
        record = run.to_dict()
        created = call(
            "POST",
            "/api/v1/runs",
            json={
                "run_type": record["run_type"],
                "start_time": record["start_time"],
                "fill_number": record["fill_number"],
                "configuration": record["configuration"],
                "tags": record["tags"],
            },
        )
        if created is None:
            return
        number = created["run_number"]
        with lock:
            run_map[run.run_number] = number
        if run.state is RunState.ENDED:
            call("PATCH", f"/api/v1/runs/{number}", json={"end": {"end_time": record["end_time"]}})
        if run.quality is not RunQuality.UNKNOWN:
            call("PATCH", f"/api/v1/runs/{number}", json={"quality": run.quality.value})

    def create_chain(chain: list[ReconstructionPass]):
        for rec in chain:
            with lock:
                ref = _remap_ref(rec.input, run_map, pass_map)
            if ref is None:
                skip(f"pass {rec.pass_id}: dependency was not created")
                return
            created = call(
                "POST",
                "/api/v1/passes",
                json={
                    "name": rec.name,
                    "input": ref.to_dict(),
                    "configuration": dict(rec.configuration),
                },
            )
            if created is None:
                return
            with lock:
                pass_map[rec.pass_id] = created["pass_id"]
            if rec.status.value != created["status"]:
                call(
                    "PATCH",
                    f"/api/v1/passes/{created['pass_id']}",
                    json={"status": rec.status.value},
                )

    def create_log(indexed: tuple[int, SimLog]):
        index, sim_log = indexed
        with lock:
            refs = [_remap_ref(r, run_map, pass_map) for r in sim_log.associations]
        if any(r is None for r in refs):
            skip(f"log {index}: dependency was not created")
            return
        payload = {"associations": [r.to_dict() for r in refs], "tags": list(sim_log.tags)}
        if sim_log.template_name is not None:
            payload["template_name"] = sim_log.template_name
            payload["values"] = dict(sim_log.values)
        else:
            payload["title"] = sim_log.title
            payload["body"] = sim_log.body
        call("POST", "/api/v1/logs", json=payload)

    try:
        _run_phase(dataset.templates, create_template, 1)
        _run_phase(dataset.fills, create_fill, concurrency)
        _run_phase(dataset.runs, create_run, concurrency)
        _run_phase(_pass_chains(dataset.passes), create_chain, concurrency)
        _run_phase(tuple(enumerate(dataset.logs, start=1)), create_log, concurrency)
    finally:
        if own_client:
            client.close()
    return report


def _run_phase(items, job, concurrency: int) -> None:
    """Run one dependency phase, optionally with parallel workers."""
    if concurrency <= 1 or len(items) <= 1:
        for item in items:
            job(item)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=concurrency) as pool:
        for future in [pool.submit(job, item) for item in items]:
            future.result()


def _pass_chains(passes) -> list[list[ReconstructionPass]]:
    """Group passes into independent chains; links stay in input order."""
    chains: list[list[ReconstructionPass]] = []
    chain_of: dict[int, list[ReconstructionPass]] = {}
    for rec in passes:
        if rec.input.kind is RefKind.PASS and rec.input.id in chain_of:
            chain = chain_of[rec.input.id]
        else:
            chain = []
            chains.append(chain)
        chain.append(rec)
        chain_of[rec.pass_id] = chain
    return chains


def _remap_ref(ref: EntityRef, run_map: dict[int, int], pass_map: dict[int, int]) -> EntityRef | None:
    if ref.kind is RefKind.RUN:
        mapped = run_map.get(ref.id)
    elif ref.kind is RefKind.PASS:
        mapped = pass_map.get(ref.id)
    else:
        return ref
    return None if mapped is None else EntityRef(ref.kind, mapped)

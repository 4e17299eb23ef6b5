"""Aggregate operational statistics over the store.

Reports are read-only, deterministic functions of store contents.
Entities are selected by their start/created time within the half-open
window ``[from, to)``; either bound may be absent (open side).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from datetime import datetime

from runlog.canonical import format_ts
from runlog.domain import LogEntry, ReconstructionPass, Run, RunState
from runlog.errors import InvalidQuery

# Bucket label and half-open duration interval in seconds (None = unbounded).
DURATION_BUCKETS: tuple[tuple[str, float, float | None], ...] = (
    ("<10m", 0.0, 600.0),
    ("10m-1h", 600.0, 3600.0),
    ("1h-6h", 3600.0, 21600.0),
    ("6h-24h", 21600.0, 86400.0),
    (">=24h", 86400.0, None),
)


@dataclass(frozen=True)
class OverviewReport:
    time_from: datetime | None
    time_to: datetime | None
    fill_count: int
    run_count: int
    log_count: int
    pass_count: int
    mean_runs_per_fill: float
    runs_without_fill: int
    duration_histogram: dict[str, int]
    tag_frequency: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "time_range": {
                "from": None if self.time_from is None else format_ts(self.time_from),
                "to": None if self.time_to is None else format_ts(self.time_to),
            },
            "fill_count": self.fill_count,
            "run_count": self.run_count,
            "log_count": self.log_count,
            "pass_count": self.pass_count,
            "mean_runs_per_fill": self.mean_runs_per_fill,
            "runs_without_fill": self.runs_without_fill,
            "duration_histogram": dict(self.duration_histogram),
            "tag_frequency": dict(sorted(self.tag_frequency.items())),
        }


@dataclass(frozen=True)
class RunsPerFillRow:
    fill_number: int
    run_count: int

    def to_dict(self) -> dict:
        return {"fill_number": self.fill_number, "run_count": self.run_count}


def _check_range(time_from: datetime | None, time_to: datetime | None) -> None:
    if time_from is not None and time_to is not None and time_from > time_to:
        raise InvalidQuery("report range reversed: from after to")


def _in_range(ts: datetime, time_from: datetime | None, time_to: datetime | None) -> bool:
    if time_from is not None and ts < time_from:
        return False
    if time_to is not None and ts >= time_to:
        return False
    return True


def overview(store, time_from: datetime | None = None, time_to: datetime | None = None) -> OverviewReport:
    """Counts, runs-per-fill mean, duration histogram and tag frequencies."""
    _check_range(time_from, time_to)
    fills = [f for f in store.all_fills() if _in_range(f.created_at, time_from, time_to)]
    runs: list[Run] = [r for r in store.all_runs() if _in_range(r.start_time, time_from, time_to)]
    logs: list[LogEntry] = [
        e for e in store.all_logs() if _in_range(e.created_at, time_from, time_to)
    ]
    passes: list[ReconstructionPass] = [
        p for p in store.all_passes() if _in_range(p.created_at, time_from, time_to)
    ]

    runs_with_fill = [r for r in runs if r.fill_number is not None]
    fills_with_runs = {r.fill_number for r in runs_with_fill}
    mean = len(runs_with_fill) / len(fills_with_runs) if fills_with_runs else 0.0

    histogram = {label: 0 for label, _, _ in DURATION_BUCKETS}
    for run in runs:
        if run.state is not RunState.ENDED or run.end_time is None:
            continue
        seconds = (run.end_time - run.start_time).total_seconds()
        for label, lo, hi in DURATION_BUCKETS:
            if seconds >= lo and (hi is None or seconds < hi):
                histogram[label] += 1
                break

    tag_frequency: dict[str, int] = {}
    for run in runs:
        for tag in run.tags:
            tag_frequency[tag] = tag_frequency.get(tag, 0) + 1

    return OverviewReport(
        time_from=time_from,
        time_to=time_to,
        fill_count=len(fills),
        run_count=len(runs),
        log_count=len(logs),
        pass_count=len(passes),
        mean_runs_per_fill=mean,
        runs_without_fill=len(runs) - len(runs_with_fill),
        duration_histogram=histogram,
        tag_frequency=tag_frequency,
    )


def runs_per_fill(
    store, time_from: datetime | None = None, time_to: datetime | None = None
) -> list[RunsPerFillRow]:
    """One row per fill with at least one run in range, busiest fill first."""
    _check_range(time_from, time_to)
    counts: dict[int, int] = {}
    for run in store.all_runs():
        if run.fill_number is None or not _in_range(run.start_time, time_from, time_to):
            continue
        counts[run.fill_number] = counts.get(run.fill_number, 0) + 1
    rows = [RunsPerFillRow(fill_number=n, run_count=c) for n, c in counts.items()]
    rows.sort(key=lambda row: (-row.run_count, row.fill_number))
    return rows


def overview_csv(report: OverviewReport) -> str:
    """Flat key,value rendering of an overview report."""
    out = io.StringIO()
    out.write("key,value\r\n")
    data = report.to_dict()
    out.write(f"time_from,{data['time_range']['from'] or ''}\r\n")
    out.write(f"time_to,{data['time_range']['to'] or ''}\r\n")
    for key in ("fill_count", "run_count", "log_count", "pass_count",
                "mean_runs_per_fill", "runs_without_fill"):
        out.write(f"{key},{data[key]}\r\n")
    for label, count in report.duration_histogram.items():
        out.write(f"duration_histogram.{label},{count}\r\n")
    for tag, count in sorted(report.tag_frequency.items()):
        out.write(f"tag_frequency.{tag},{count}\r\n")
    return out.getvalue()


def runs_per_fill_csv(rows: list[RunsPerFillRow]) -> str:
    out = io.StringIO()
    out.write("fill_number,run_count\r\n")
    for row in rows:
        out.write(f"{row.fill_number},{row.run_count}\r\n")
    return out.getvalue()

"""Run lifecycle events.

A run accepts exactly one END over its lifetime; quality and tag events
apply in any state. Applying an event never mutates the input value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime

from runlog.canonical import clamp_ms
from runlog.domain.models import Run, RunQuality, RunState, normalize_tag
from runlog.errors import InvalidTimestamps, InvalidTransition, NotFound


@dataclass(frozen=True)
class EndRun:
    end_time: datetime


@dataclass(frozen=True)
class SetQuality:
    quality: RunQuality


@dataclass(frozen=True)
class AddTag:
    tag: str


@dataclass(frozen=True)
class RemoveTag:
    tag: str


RunEvent = EndRun | SetQuality | AddTag | RemoveTag


def apply_run_event(run: Run, event: RunEvent) -> Run:
    """Apply one lifecycle event and return the resulting run value."""
    if isinstance(event, EndRun):
        if run.state is RunState.ENDED:
            raise InvalidTransition(f"run {run.run_number} already ended")
        end_time = clamp_ms(event.end_time)
        if end_time < run.start_time:
            raise InvalidTimestamps(
                f"run {run.run_number}: end_time before start_time"
            )
        return replace(run, state=RunState.ENDED, end_time=end_time)
    if isinstance(event, SetQuality):
        return replace(run, quality=RunQuality(event.quality))
    if isinstance(event, AddTag):
        return replace(run, tags=run.tags | {normalize_tag(event.tag)})
    if isinstance(event, RemoveTag):
        tag = normalize_tag(event.tag)
        if tag not in run.tags:
            raise NotFound(f"run {run.run_number} has no tag {tag!r}")
        return replace(run, tags=run.tags - {tag})
    raise TypeError(f"unknown run event {event!r}")


def run_duration(run: Run) -> float | None:
    """Seconds between start and end; absent while the run is ongoing."""
    if run.state is not RunState.ENDED or run.end_time is None:
        return None
    return (run.end_time - run.start_time).total_seconds()

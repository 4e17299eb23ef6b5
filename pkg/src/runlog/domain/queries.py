"""Catalogue query values and the predicates that evaluate them.

These predicates are the single source of truth for what matches: the
store filters with them and independent test oracles are checked against
them. Absent filters match everything; present ones combine with AND.
Time ranges are inclusive on both ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

from runlog.domain.models import (
    EntityRef,
    LogEntry,
    Run,
    RunQuality,
    RunState,
    RunType,
)
from runlog.errors import InvalidQuery


@dataclass(frozen=True)
class RunQuery:
    run_number_range: tuple[int, int] | None = None
    time_range: tuple[datetime, datetime] | None = None
    run_types: frozenset[RunType] | None = None
    qualities: frozenset[RunQuality] | None = None
    fill_number: int | None = None
    tags_all: frozenset[str] | None = None
    states: frozenset[RunState] | None = None

    def validate(self) -> None:
        if self.run_number_range is not None:
            lo, hi = self.run_number_range
            if lo > hi:
                raise InvalidQuery(f"run_number_range reversed: {lo} > {hi}")
        _check_time_range(self.time_range)


@dataclass(frozen=True)
class LogQuery:
    text: tuple[str, ...] | None = None
    tags_all: frozenset[str] | None = None
    author: str | None = None
    association: EntityRef | None = None
    time_range: tuple[datetime, datetime] | None = None

    def validate(self) -> None:
        _check_time_range(self.time_range)


def _check_time_range(time_range: tuple[datetime, datetime] | None) -> None:
    if time_range is not None:
        lo, hi = time_range
        if lo > hi:
            raise InvalidQuery("time_range reversed: from after to")


def match_run(run: Run, q: RunQuery) -> bool:
    """True iff the run satisfies every present filter of the query."""
    q.validate()
    if q.run_number_range is not None:
        lo, hi = q.run_number_range
        if not lo <= run.run_number <= hi:
            return False
    if q.time_range is not None:
        lo, hi = q.time_range
        if not lo <= run.start_time <= hi:
            return False
    if q.run_types is not None and run.run_type not in q.run_types:
        return False
    if q.qualities is not None and run.quality not in q.qualities:
        return False
    if q.fill_number is not None and run.fill_number != q.fill_number:
        return False
    if q.tags_all is not None and not run.tags >= q.tags_all:
        return False
    if q.states is not None and run.state not in q.states:
        return False
    return True


def match_log(log: LogEntry, q: LogQuery) -> bool:
    """True iff the log entry satisfies every present filter of the query.

    The text filter is case-insensitive token containment: every query token
    must occur as a substring of the title plus a space plus the current body.
    """
    q.validate()
    if q.text is not None:
        haystack = f"{log.title} {log.body}".lower()
        for token in q.text:
            if token.lower() not in haystack:
                return False
    if q.tags_all is not None and not log.tags >= q.tags_all:
        return False
    if q.author is not None and log.author.actor_id != q.author:
        return False
    if q.association is not None and q.association not in log.associations:
        return False
    if q.time_range is not None:
        lo, hi = q.time_range
        if not lo <= log.created_at <= hi:
            return False
    return True

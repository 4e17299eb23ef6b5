"""Pure domain layer: entity values, lifecycle events, lineage resolution,
template rendering and query predicates. No I/O, no shared state."""

from runlog.domain.events import (
    AddTag,
    EndRun,
    RemoveTag,
    RunEvent,
    SetQuality,
    apply_run_event,
    run_duration,
)
from runlog.domain.lineage import resolve_lineage
from runlog.domain.models import (
    ASSOCIATION_KINDS,
    PASS_INPUT_KINDS,
    ActorRef,
    ActorRole,
    Attachment,
    EntityRef,
    LhcFill,
    LogEntry,
    LogOrigin,
    PassStatus,
    ReconstructionPass,
    RefKind,
    Revision,
    Run,
    RunQuality,
    RunState,
    RunType,
    Template,
    new_log_entry,
    normalize_tag,
    normalize_tags,
)
from runlog.domain.queries import LogQuery, RunQuery, match_log, match_run
from runlog.domain.templates import RenderedEntry, render_template

__all__ = [
    "ASSOCIATION_KINDS",
    "PASS_INPUT_KINDS",
    "ActorRef",
    "ActorRole",
    "AddTag",
    "Attachment",
    "EndRun",
    "EntityRef",
    "LhcFill",
    "LogEntry",
    "LogOrigin",
    "LogQuery",
    "PassStatus",
    "ReconstructionPass",
    "RefKind",
    "RemoveTag",
    "RenderedEntry",
    "Revision",
    "Run",
    "RunEvent",
    "RunQuality",
    "RunQuery",
    "RunState",
    "RunType",
    "SetQuality",
    "Template",
    "apply_run_event",
    "match_log",
    "match_run",
    "new_log_entry",
    "normalize_tag",
    "normalize_tags",
    "render_template",
    "resolve_lineage",
    "run_duration",
]

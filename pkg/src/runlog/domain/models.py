"""Entity types of the run catalogue and logbook.

All types are immutable values; lifecycle changes go through the event
functions in :mod:`runlog.domain.events` and always produce new values.
Validation happens at construction so an instance that exists is an
instance that satisfies its invariants.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Mapping

from runlog.canonical import clamp_ms, format_ts, parse_ts
from runlog.errors import Invalid, InvalidTimestamps

TAG_PATTERN = re.compile(r"[a-z0-9][a-z0-9._-]{0,63}\Z")
DIGEST_PATTERN = re.compile(r"[0-9a-f]{64}\Z")
PLACEHOLDER_PATTERN = re.compile(r"\{\{([A-Za-z0-9_]+)\}\}")


class RunType(str, Enum):
    GLOBAL = "GLOBAL"
    DETECTOR_CALIBRATION = "DETECTOR_CALIBRATION"
    COSMICS = "COSMICS"
    TECHNICAL = "TECHNICAL"


class RunState(str, Enum):
    ONGOING = "ONGOING"
    ENDED = "ENDED"


class RunQuality(str, Enum):
    UNKNOWN = "UNKNOWN"
    GOOD = "GOOD"
    BAD = "BAD"


class PassStatus(str, Enum):
    PENDING = "PENDING"
    RUNNING = "RUNNING"
    DONE = "DONE"
    FAILED = "FAILED"


class LogOrigin(str, Enum):
    HUMAN = "HUMAN"
    PROCESS = "PROCESS"


class ActorRole(str, Enum):
    SHIFTER = "SHIFTER"
    RUN_COORDINATOR = "RUN_COORDINATOR"
    MANAGER = "MANAGER"
    PHYSICIST = "PHYSICIST"
    MACHINE = "MACHINE"


class RefKind(str, Enum):
    RUN = "RUN"
    FILL = "FILL"
    PASS = "PASS"
    LOG = "LOG"
    # Audit targets only; log associations and pass inputs never carry it.
    TEMPLATE = "TEMPLATE"


# Kinds a log entry may be associated with.
ASSOCIATION_KINDS = frozenset({RefKind.RUN, RefKind.FILL, RefKind.PASS})
# Kinds a reconstruction pass may take as input.
PASS_INPUT_KINDS = frozenset({RefKind.RUN, RefKind.PASS})


def normalize_tag(raw: str) -> str:
    """Trim + lowercase a tag and enforce the tag character set."""
    value = raw.strip().lower()
    if not TAG_PATTERN.fullmatch(value):
        raise Invalid(f"invalid tag {raw!r}: must match [a-z0-9][a-z0-9._-]{{0,63}}")
    return value


def normalize_tags(raw_tags) -> frozenset[str]:
    return frozenset(normalize_tag(t) for t in raw_tags)


def _check_tags(tags: frozenset[str], owner: str) -> None:
    for tag in tags:
        if not TAG_PATTERN.fullmatch(tag):
            raise Invalid(f"{owner} carries unnormalized tag {tag!r}")


def _positive(value: int, name: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise Invalid(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class EntityRef:
    """Typed reference to a fill, run, pass, log or template."""

    kind: RefKind
    id: int

    def __post_init__(self):
        if not isinstance(self.kind, RefKind):
            object.__setattr__(self, "kind", RefKind(self.kind))
        _positive(self.id, "entity ref id")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "id": self.id}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EntityRef":
        return cls(kind=RefKind(data["kind"]), id=int(data["id"]))


@dataclass(frozen=True)
class ActorRef:
    """Who performed an action: a person or a machine token."""

    actor_id: str
    role: ActorRole

    def __post_init__(self):
        if not self.actor_id:
            raise Invalid("actor_id must be non-empty")
        if not isinstance(self.role, ActorRole):
            object.__setattr__(self, "role", ActorRole(self.role))

    def to_dict(self) -> dict[str, Any]:
        return {"actor_id": self.actor_id, "role": self.role.value}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ActorRef":
        return cls(actor_id=data["actor_id"], role=ActorRole(data["role"]))


@dataclass(frozen=True)
class LhcFill:
    """An accelerator fill period; groups the runs taken during it."""

    fill_number: int
    beam_type: str
    created_at: datetime
    stable_beams_start: datetime | None = None
    stable_beams_end: datetime | None = None

    def __post_init__(self):
        _positive(self.fill_number, "fill_number")
        object.__setattr__(self, "created_at", clamp_ms(self.created_at))
        for name in ("stable_beams_start", "stable_beams_end"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, clamp_ms(value))
        if (
            self.stable_beams_start is not None
            and self.stable_beams_end is not None
            and self.stable_beams_start > self.stable_beams_end
        ):
            raise InvalidTimestamps(
                f"fill {self.fill_number}: stable beams start after end"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "fill_number": self.fill_number,
            "beam_type": self.beam_type,
            "created_at": format_ts(self.created_at),
            "stable_beams_start": _opt_ts(self.stable_beams_start),
            "stable_beams_end": _opt_ts(self.stable_beams_end),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LhcFill":
        return cls(
            fill_number=int(data["fill_number"]),
            beam_type=data["beam_type"],
            created_at=parse_ts(data["created_at"]),
            stable_beams_start=_opt_parse(data.get("stable_beams_start")),
            stable_beams_end=_opt_parse(data.get("stable_beams_end")),
        )


@dataclass(frozen=True)
class Run:
    """One bounded synchronous data-taking activity."""

    run_number: int
    run_type: RunType
    state: RunState
    start_time: datetime
    end_time: datetime | None = None
    fill_number: int | None = None
    configuration: Mapping[str, str] = field(default_factory=dict)
    quality: RunQuality = RunQuality.UNKNOWN
    tags: frozenset[str] = frozenset()

    def __post_init__(self):
        _positive(self.run_number, "run_number")
        if not isinstance(self.run_type, RunType):
            object.__setattr__(self, "run_type", RunType(self.run_type))
        if not isinstance(self.state, RunState):
            object.__setattr__(self, "state", RunState(self.state))
        if not isinstance(self.quality, RunQuality):
            object.__setattr__(self, "quality", RunQuality(self.quality))
        object.__setattr__(self, "start_time", clamp_ms(self.start_time))
        if self.end_time is not None:
            object.__setattr__(self, "end_time", clamp_ms(self.end_time))
        if self.fill_number is not None:
            _positive(self.fill_number, "fill_number")
        object.__setattr__(self, "configuration", dict(self.configuration))
        object.__setattr__(self, "tags", frozenset(self.tags))
        _check_tags(self.tags, f"run {self.run_number}")
        if self.state is RunState.ENDED:
            if self.end_time is None:
                raise Invalid(f"run {self.run_number}: ENDED requires end_time")
            if self.end_time < self.start_time:
                raise InvalidTimestamps(
                    f"run {self.run_number}: end_time before start_time"
                )
        elif self.end_time is not None:
            raise Invalid(f"run {self.run_number}: ONGOING must not carry end_time")

    @property
    def data_set_id(self) -> str:
        return f"run-{self.run_number}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_number": self.run_number,
            "run_type": self.run_type.value,
            "state": self.state.value,
            "start_time": format_ts(self.start_time),
            "end_time": _opt_ts(self.end_time),
            "fill_number": self.fill_number,
            "configuration": dict(sorted(self.configuration.items())),
            "quality": self.quality.value,
            "tags": sorted(self.tags),
            "data_set_id": self.data_set_id,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Run":
        run = cls(
            run_number=int(data["run_number"]),
            run_type=RunType(data["run_type"]),
            state=RunState(data["state"]),
            start_time=parse_ts(data["start_time"]),
            end_time=_opt_parse(data.get("end_time")),
            fill_number=(None if data.get("fill_number") is None else int(data["fill_number"])),
            configuration=data.get("configuration") or {},
            quality=RunQuality(data.get("quality", "UNKNOWN")),
            tags=frozenset(data.get("tags") or ()),
        )
        declared = data.get("data_set_id")
        if declared is not None and declared != run.data_set_id:
            raise Invalid(
                f"run {run.run_number}: data_set_id {declared!r} does not match derived value"
            )
        return run


@dataclass(frozen=True)
class ReconstructionPass:
    """An asynchronous processing step whose input is one run or one prior pass."""

    pass_id: int
    name: str
    input: EntityRef
    status: PassStatus
    created_at: datetime
    configuration: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        _positive(self.pass_id, "pass_id")
        if not isinstance(self.status, PassStatus):
            object.__setattr__(self, "status", PassStatus(self.status))
        if self.input.kind not in PASS_INPUT_KINDS:
            raise Invalid(
                f"pass {self.pass_id}: input kind must be RUN or PASS, got {self.input.kind.value}"
            )
        object.__setattr__(self, "created_at", clamp_ms(self.created_at))
        object.__setattr__(self, "configuration", dict(self.configuration))

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass_id": self.pass_id,
            "name": self.name,
            "input": self.input.to_dict(),
            "status": self.status.value,
            "created_at": format_ts(self.created_at),
            "configuration": dict(sorted(self.configuration.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReconstructionPass":
        return cls(
            pass_id=int(data["pass_id"]),
            name=data["name"],
            input=EntityRef.from_dict(data["input"]),
            status=PassStatus(data["status"]),
            created_at=parse_ts(data["created_at"]),
            configuration=data.get("configuration") or {},
        )


@dataclass(frozen=True)
class Attachment:
    """Metadata of one content-addressed attachment blob."""

    digest: str
    filename: str
    media_type: str
    size_bytes: int

    def __post_init__(self):
        if not DIGEST_PATTERN.fullmatch(self.digest):
            raise Invalid(f"attachment digest must be 64 hex chars, got {self.digest!r}")
        if self.size_bytes < 0:
            raise Invalid("attachment size_bytes must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "digest": self.digest,
            "filename": self.filename,
            "media_type": self.media_type,
            "size_bytes": self.size_bytes,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Attachment":
        return cls(
            digest=data["digest"],
            filename=data["filename"],
            media_type=data["media_type"],
            size_bytes=int(data["size_bytes"]),
        )


@dataclass(frozen=True)
class Revision:
    """One immutable snapshot of a log entry's content."""

    revision_index: int
    title: str
    body: str
    edited_by: ActorRef
    edited_at: datetime

    def __post_init__(self):
        if self.revision_index < 0:
            raise Invalid("revision_index must be non-negative")
        object.__setattr__(self, "edited_at", clamp_ms(self.edited_at))

    def to_dict(self) -> dict[str, Any]:
        return {
            "revision_index": self.revision_index,
            "title": self.title,
            "body": self.body,
            "edited_by": self.edited_by.to_dict(),
            "edited_at": format_ts(self.edited_at),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Revision":
        return cls(
            revision_index=int(data["revision_index"]),
            title=data["title"],
            body=data["body"],
            edited_by=ActorRef.from_dict(data["edited_by"]),
            edited_at=parse_ts(data["edited_at"]),
        )


@dataclass(frozen=True)
class LogEntry:
    """A human or machine annotation; edits append revisions and never overwrite."""

    log_id: int
    title: str
    body: str
    author: ActorRef
    origin: LogOrigin
    created_at: datetime
    associations: tuple[EntityRef, ...] = ()
    tags: frozenset[str] = frozenset()
    attachments: tuple[Attachment, ...] = ()
    revisions: tuple[Revision, ...] = ()

    def __post_init__(self):
        _positive(self.log_id, "log_id")
        if not isinstance(self.origin, LogOrigin):
            object.__setattr__(self, "origin", LogOrigin(self.origin))
        object.__setattr__(self, "created_at", clamp_ms(self.created_at))
        object.__setattr__(self, "associations", tuple(self.associations))
        object.__setattr__(self, "tags", frozenset(self.tags))
        object.__setattr__(self, "attachments", tuple(self.attachments))
        object.__setattr__(self, "revisions", tuple(self.revisions))
        _check_tags(self.tags, f"log {self.log_id}")
        for ref in self.associations:
            if ref.kind not in ASSOCIATION_KINDS:
                raise Invalid(
                    f"log {self.log_id}: association kind {ref.kind.value} not allowed"
                )
        if not self.revisions:
            raise Invalid(f"log {self.log_id}: needs at least the creation revision")
        for index, rev in enumerate(self.revisions):
            if rev.revision_index != index:
                raise Invalid(f"log {self.log_id}: revision indices must be contiguous from 0")
        last = self.revisions[-1]
        if (last.title, last.body) != (self.title, self.body):
            raise Invalid(f"log {self.log_id}: current content must equal the last revision")

    def to_dict(self) -> dict[str, Any]:
        return {
            "log_id": self.log_id,
            "title": self.title,
            "body": self.body,
            "author": self.author.to_dict(),
            "origin": self.origin.value,
            "created_at": format_ts(self.created_at),
            "associations": [ref.to_dict() for ref in self.associations],
            "tags": sorted(self.tags),
            "attachments": [a.to_dict() for a in self.attachments],
            "revisions": [r.to_dict() for r in self.revisions],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "LogEntry":
        return cls(
            log_id=int(data["log_id"]),
            title=data["title"],
            body=data["body"],
            author=ActorRef.from_dict(data["author"]),
            origin=LogOrigin(data["origin"]),
            created_at=parse_ts(data["created_at"]),
            associations=tuple(EntityRef.from_dict(r) for r in data.get("associations") or ()),
            tags=frozenset(data.get("tags") or ()),
            attachments=tuple(Attachment.from_dict(a) for a in data.get("attachments") or ()),
            revisions=tuple(Revision.from_dict(r) for r in data.get("revisions") or ()),
        )


def new_log_entry(
    log_id: int,
    title: str,
    body: str,
    author: ActorRef,
    origin: LogOrigin,
    created_at: datetime,
    associations=(),
    tags=(),
) -> LogEntry:
    """Build a fresh log entry whose revision 0 is the creation content."""
    creation = Revision(
        revision_index=0, title=title, body=body, edited_by=author, edited_at=created_at
    )
    return LogEntry(
        log_id=log_id,
        title=title,
        body=body,
        author=author,
        origin=origin,
        created_at=created_at,
        associations=tuple(associations),
        tags=normalize_tags(tags),
        attachments=(),
        revisions=(creation,),
    )


@dataclass(frozen=True)
class Template:
    """A named title/body pattern with ``{{placeholder}}`` slots."""

    template_name: str
    title_pattern: str
    body_pattern: str
    required_fields: frozenset[str] = frozenset()
    default_tags: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.template_name:
            raise Invalid("template_name must be non-empty")
        object.__setattr__(self, "required_fields", frozenset(self.required_fields))
        object.__setattr__(self, "default_tags", frozenset(self.default_tags))
        _check_tags(self.default_tags, f"template {self.template_name}")
        unknown = self.required_fields - self.placeholders()
        if unknown:
            raise Invalid(
                f"template {self.template_name}: required fields {sorted(unknown)} "
                "do not appear as placeholders"
            )

    def placeholders(self) -> frozenset[str]:
        found = PLACEHOLDER_PATTERN.findall(self.title_pattern)
        found += PLACEHOLDER_PATTERN.findall(self.body_pattern)
        return frozenset(found)

    def to_dict(self) -> dict[str, Any]:
        return {
            "template_name": self.template_name,
            "title_pattern": self.title_pattern,
            "body_pattern": self.body_pattern,
            "required_fields": sorted(self.required_fields),
            "default_tags": sorted(self.default_tags),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Template":
        return cls(
            template_name=data["template_name"],
            title_pattern=data["title_pattern"],
            body_pattern=data["body_pattern"],
            required_fields=frozenset(data.get("required_fields") or ()),
            default_tags=frozenset(data.get("default_tags") or ()),
        )


def _opt_ts(dt: datetime | None) -> str | None:
    return None if dt is None else format_ts(dt)


def _opt_parse(raw: str | None) -> datetime | None:
    return None if raw is None else parse_ts(raw)

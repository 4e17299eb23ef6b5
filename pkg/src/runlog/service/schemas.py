"""Wire models of the REST API.

Request models validate client JSON; response models pin the wire format
(timestamps are canonical ``...mmmZ`` strings) and feed the generated API
description document.
"""

from __future__ import annotations

from datetime import datetime
from typing import Annotated, Any, Generic, TypeVar

from pydantic import BaseModel, ConfigDict, Field, PlainSerializer, model_validator

from runlog import domain
from runlog.canonical import format_ts
from runlog.domain import (
    ActorRole,
    LogOrigin,
    PassStatus,
    RefKind,
    RunQuality,
    RunState,
    RunType,
)
from runlog.reports import OverviewReport, RunsPerFillRow
from runlog.store import AuditAction, AuditRecord, Page

T = TypeVar("T")

# Canonical UTC millisecond timestamp on the wire.
UtcTs = Annotated[datetime, PlainSerializer(format_ts, return_type=str)]


class ErrorEnvelope(BaseModel):
    """Uniform body of every non-2xx response."""

    code: str
    message: str
    detail: dict[str, Any] | None = None


# -- requests -----------------------------------------------------------------


class EntityRefIn(BaseModel):
    kind: RefKind
    id: int = Field(gt=0)

    def to_domain(self) -> domain.EntityRef:
        return domain.EntityRef(kind=self.kind, id=self.id)


class FillCreate(BaseModel):
    fill_number: int = Field(gt=0)
    beam_type: str
    stable_beams_start: datetime | None = None
    stable_beams_end: datetime | None = None


class RunCreate(BaseModel):
    run_type: RunType
    start_time: datetime | None = None
    fill_number: int | None = Field(default=None, gt=0)
    configuration: dict[str, str] = Field(default_factory=dict)
    tags: list[str] = Field(default_factory=list)


class RunEndEvent(BaseModel):
    end_time: datetime | None = None


class RunPatch(BaseModel):
    """Exactly one lifecycle event: end the run or set its quality."""

    end: RunEndEvent | None = None
    quality: RunQuality | None = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.end is None) == (self.quality is None):
            raise ValueError("provide exactly one of 'end' or 'quality'")
        return self


class TagAdd(BaseModel):
    tag: str


class PassCreate(BaseModel):
    name: str
    input: EntityRefIn
    configuration: dict[str, str] = Field(default_factory=dict)


class PassPatch(BaseModel):
    status: PassStatus


class LogCreate(BaseModel):
    """Direct content or a template reference, not both."""

    title: str | None = None
    body: str = ""
    template_name: str | None = None
    values: dict[str, str] = Field(default_factory=dict)
    associations: list[EntityRefIn] = Field(default_factory=list)
    tags: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.title is None) == (self.template_name is None):
            raise ValueError("provide exactly one of 'title' or 'template_name'")
        return self


class LogPatch(BaseModel):
    title: str | None = None
    body: str | None = None

    @model_validator(mode="after")
    def _any_change(self):
        if self.title is None and self.body is None:
            raise ValueError("provide 'title' and/or 'body'")
        return self


class TemplateCreate(BaseModel):
    template_name: str
    title_pattern: str
    body_pattern: str
    required_fields: list[str] = Field(default_factory=list)
    default_tags: list[str] = Field(default_factory=list)


# -- responses ----------------------------------------------------------------


class EntityRefOut(BaseModel):
    kind: RefKind
    id: int


class ActorRefOut(BaseModel):
    actor_id: str
    role: ActorRole


class FillOut(BaseModel):
    fill_number: int
    beam_type: str
    created_at: UtcTs
    stable_beams_start: UtcTs | None = None
    stable_beams_end: UtcTs | None = None


class RunOut(BaseModel):
    run_number: int
    run_type: RunType
    state: RunState
    start_time: UtcTs
    end_time: UtcTs | None = None
    fill_number: int | None = None
    configuration: dict[str, str]
    quality: RunQuality
    tags: list[str]
    data_set_id: str


class PassOut(BaseModel):
    pass_id: int
    name: str
    input: EntityRefOut
    status: PassStatus
    created_at: UtcTs
    configuration: dict[str, str]


class AttachmentOut(BaseModel):
    digest: str
    filename: str
    media_type: str
    size_bytes: int


class RevisionOut(BaseModel):
    revision_index: int
    title: str
    body: str
    edited_by: ActorRefOut
    edited_at: UtcTs


class LogOut(BaseModel):
    log_id: int
    title: str
    body: str
    author: ActorRefOut
    origin: LogOrigin
    created_at: UtcTs
    associations: list[EntityRefOut]
    tags: list[str]
    attachments: list[AttachmentOut]
    revision_count: int


class TemplateOut(BaseModel):
    template_name: str
    title_pattern: str
    body_pattern: str
    required_fields: list[str]
    default_tags: list[str]


class AuditRecordOut(BaseModel):
    seq: int
    timestamp: UtcTs
    actor: ActorRefOut
    action: AuditAction
    target: EntityRefOut
    payload_digest: str


class LineageOut(BaseModel):
    pass_id: int
    chain: list[EntityRefOut]


class PageOut(BaseModel, Generic[T]):
    items: list[T]
    total: int
    offset: int
    limit: int


class FillPage(PageOut[FillOut]):
    pass


class RunPage(PageOut[RunOut]):
    pass


class PassPage(PageOut[PassOut]):
    pass


class LogPage(PageOut[LogOut]):
    pass


class TemplatePage(PageOut[TemplateOut]):
    pass


class AuditPage(PageOut[AuditRecordOut]):
    pass


class StoreHealthOut(BaseModel):
    reachable: bool
    entities: dict[str, int]


class HealthOut(BaseModel):
    status: str
    version: str
    store: StoreHealthOut


class TimeRangeOut(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    time_from: UtcTs | None = Field(default=None, alias="from")
    time_to: UtcTs | None = Field(default=None, alias="to")


class OverviewOut(BaseModel):
    time_range: TimeRangeOut
    fill_count: int
    run_count: int
    log_count: int
    pass_count: int
    mean_runs_per_fill: float
    runs_without_fill: int
    duration_histogram: dict[str, int]
    tag_frequency: dict[str, int]


class RunsPerFillRowOut(BaseModel):
    fill_number: int
    run_count: int


# -- domain -> wire -----------------------------------------------------------


def fill_out(fill: domain.LhcFill) -> FillOut:
    return FillOut(
        fill_number=fill.fill_number,
        beam_type=fill.beam_type,
        created_at=fill.created_at,
        stable_beams_start=fill.stable_beams_start,
        stable_beams_end=fill.stable_beams_end,
    )


def run_out(run: domain.Run) -> RunOut:
    return RunOut(
        run_number=run.run_number,
        run_type=run.run_type,
        state=run.state,
        start_time=run.start_time,
        end_time=run.end_time,
        fill_number=run.fill_number,
        configuration=dict(sorted(run.configuration.items())),
        quality=run.quality,
        tags=sorted(run.tags),
        data_set_id=run.data_set_id,
    )


def pass_out(rec: domain.ReconstructionPass) -> PassOut:
    return PassOut(
        pass_id=rec.pass_id,
        name=rec.name,
        input=EntityRefOut(kind=rec.input.kind, id=rec.input.id),
        status=rec.status,
        created_at=rec.created_at,
        configuration=dict(sorted(rec.configuration.items())),
    )


def attachment_out(attachment: domain.Attachment) -> AttachmentOut:
    return AttachmentOut(**attachment.to_dict())


def revision_out(revision: domain.Revision) -> RevisionOut:
    return RevisionOut(
        revision_index=revision.revision_index,
        title=revision.title,
        body=revision.body,
        edited_by=ActorRefOut(actor_id=revision.edited_by.actor_id, role=revision.edited_by.role),
        edited_at=revision.edited_at,
    )


def log_out(log: domain.LogEntry) -> LogOut:
    return LogOut(
        log_id=log.log_id,
        title=log.title,
        body=log.body,
        author=ActorRefOut(actor_id=log.author.actor_id, role=log.author.role),
        origin=log.origin,
        created_at=log.created_at,
        associations=[EntityRefOut(kind=r.kind, id=r.id) for r in log.associations],
        tags=sorted(log.tags),
        attachments=[attachment_out(a) for a in log.attachments],
        revision_count=len(log.revisions),
    )


def template_out(template: domain.Template) -> TemplateOut:
    return TemplateOut(
        template_name=template.template_name,
        title_pattern=template.title_pattern,
        body_pattern=template.body_pattern,
        required_fields=sorted(template.required_fields),
        default_tags=sorted(template.default_tags),
    )


def audit_out(record: AuditRecord) -> AuditRecordOut:
    return AuditRecordOut(
        seq=record.seq,
        timestamp=record.timestamp,
        actor=ActorRefOut(actor_id=record.actor.actor_id, role=record.actor.role),
        action=record.action,
        target=EntityRefOut(kind=record.target.kind, id=record.target.id),
        payload_digest=record.payload_digest,
    )


def page_out(page: Page, convert, model: type) -> PageOut:
    return model(
        items=[convert(item) for item in page.items],
        total=page.total,
        offset=page.offset,
        limit=page.limit,
    )


def overview_out(report: OverviewReport) -> OverviewOut:
    return OverviewOut(
        time_range=TimeRangeOut(time_from=report.time_from, time_to=report.time_to),
        fill_count=report.fill_count,
        run_count=report.run_count,
        log_count=report.log_count,
        pass_count=report.pass_count,
        mean_runs_per_fill=report.mean_runs_per_fill,
        runs_without_fill=report.runs_without_fill,
        duration_histogram=dict(report.duration_histogram),
        tag_frequency=dict(sorted(report.tag_frequency.items())),
    )


def runs_per_fill_out(rows: list[RunsPerFillRow]) -> list[RunsPerFillRowOut]:
    return [RunsPerFillRowOut(fill_number=r.fill_number, run_count=r.run_count) for r in rows]

"""HTTP front door: routes under /api/v1, bearer-token auth, a uniform
error envelope and a self-describing API document generated from the
live route table."""

# No `from __future__ import annotations` here: the factory's closures
# reference locally-scoped dependencies, which stringified annotations
# would hide from the framework's signature inspection.

from datetime import datetime, timezone
from pathlib import Path
from typing import Annotated

from fastapi import APIRouter, Depends, FastAPI, File, Query, Request, UploadFile
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.openapi.utils import get_openapi
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.security import HTTPAuthorizationCredentials, HTTPBearer
from fastapi.staticfiles import StaticFiles
from starlette.exceptions import HTTPException as StarletteHTTPException

import runlog
from runlog import reports as reports_mod
from runlog.canonical import clamp_ms, utc_now
from runlog.domain import (
    ActorRef,
    AddTag,
    EndRun,
    EntityRef,
    LogQuery,
    RefKind,
    RemoveTag,
    RunQuality,
    RunQuery,
    RunState,
    RunType,
    SetQuality,
    normalize_tag,
    render_template,
    resolve_lineage,
)
from runlog.domain.models import PASS_INPUT_KINDS
from runlog.errors import (
    BrokenLineage,
    Conflict,
    CorruptLineage,
    Invalid,
    InvalidQuery,
    InvalidTimestamps,
    InvalidTransition,
    MissingField,
    NotFound,
    ParseError,
    RunlogError,
    TooLarge,
    UnknownDigest,
    UnknownReference,
)
from runlog.service import schemas as s
from runlog.service.config import ServiceConfig
from runlog.store import Store

API_PREFIX = "/api/v1"

_STATUS_CODES = {
    400: "INVALID",
    401: "UNAUTHORIZED",
    404: "NOT_FOUND",
    405: "INVALID",
    409: "CONFLICT",
    413: "TOO_LARGE",
    422: "INVALID",
}

_EPOCH_MIN = datetime(1, 1, 1, tzinfo=timezone.utc)
_EPOCH_MAX = datetime(9999, 12, 30, tzinfo=timezone.utc)
_RUN_NUMBER_MAX = 2**62


class ApiError(Exception):
    """Error carrying its HTTP status and stable envelope code."""

    def __init__(self, status: int, code: str, message: str, detail: dict | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


def _translate(exc: RunlogError) -> ApiError:
    message = str(exc)
    if isinstance(exc, MissingField):
        return ApiError(400, "INVALID", message, {"field": exc.field})
    if isinstance(exc, (InvalidTransition, Conflict)):
        return ApiError(409, "CONFLICT", message)
    if isinstance(exc, (UnknownReference, NotFound, UnknownDigest)):
        return ApiError(404, "NOT_FOUND", message)
    if isinstance(exc, TooLarge):
        return ApiError(413, "TOO_LARGE", message)
    if isinstance(exc, (InvalidQuery, InvalidTimestamps, Invalid, ParseError)):
        return ApiError(400, "INVALID", message)
    if isinstance(exc, (BrokenLineage, CorruptLineage)):
        return ApiError(500, "INTERNAL", message)
    return ApiError(500, "INTERNAL", message)


def _envelope(status: int, code: str, message: str, detail: dict | None = None) -> JSONResponse:
    body = s.ErrorEnvelope(code=code, message=message, detail=detail)
    return JSONResponse(status_code=status, content=body.model_dump(exclude_none=False))


def _errs(*statuses: int) -> dict:
    descriptions = {
        400: "Malformed request, parameter or query",
        401: "Missing or unknown bearer token",
        404: "No such entity",
        409: "Uniqueness or lifecycle conflict",
        413: "Attachment exceeds the size limit",
        422: "Reference kind not allowed here",
    }
    return {
        status: {"model": s.ErrorEnvelope, "description": descriptions[status]}
        for status in statuses
    }


def _offset_q() -> int:
    return Query(0, ge=0, description="Items to skip")


def _limit_q() -> int:
    return Query(100, ge=1, le=1000, description="Page size (max 1000)")


def create_app(config: ServiceConfig | None = None, store: Store | None = None) -> FastAPI:
    config = config or ServiceConfig()
    if store is None:
        store = Store(config.store_path, max_attachment_bytes=config.max_upload_bytes)
    tokens = config.token_table()

    app = FastAPI(
        title="runlog",
        version=runlog.__version__,
        openapi_url=None,
        docs_url=None,
        redoc_url=None,
    )
    app.state.store = store
    app.state.config = config

    bearer = HTTPBearer(auto_error=False)

    def require_actor(
        credentials: Annotated[HTTPAuthorizationCredentials | None, Depends(bearer)],
    ) -> ActorRef:
        if credentials is None:
            raise ApiError(401, "UNAUTHORIZED", "missing bearer token")
        actor = tokens.get(credentials.credentials)
        if actor is None:
            raise ApiError(401, "UNAUTHORIZED", "unknown token")
        return actor

    Actor = Annotated[ActorRef, Depends(require_actor)]

    public = APIRouter(prefix=API_PREFIX)
    api = APIRouter(prefix=API_PREFIX, dependencies=[Depends(require_actor)])

    # -- self-description and health -------------------------------------------

    @public.get("/openapi", response_model=dict, tags=["meta"],
                summary="The API description document")
    def openapi_document() -> dict:
        return app.openapi()

    @public.get("/health", response_model=s.HealthOut, tags=["meta"])
    def health() -> s.HealthOut:
        try:
            entities = store.counts()
            reachable = True
        except Exception:
            entities, reachable = {}, False
        return s.HealthOut(
            status="ok" if reachable else "degraded",
            version=runlog.__version__,
            store=s.StoreHealthOut(reachable=reachable, entities=entities),
        )

    # -- fills ------------------------------------------------------------------

    @api.post("/fills", response_model=s.FillOut, status_code=201, tags=["fills"],
              responses=_errs(400, 401, 409))
    def create_fill(payload: s.FillCreate, actor: Actor) -> s.FillOut:
        fill = store.create_fill(
            payload.fill_number,
            payload.beam_type,
            stable_beams_start=payload.stable_beams_start,
            stable_beams_end=payload.stable_beams_end,
            actor=actor,
        )
        return s.fill_out(fill)

    @api.get("/fills", response_model=s.FillPage, tags=["fills"], responses=_errs(400, 401))
    def list_fills(offset: int = _offset_q(), limit: int = _limit_q()) -> s.FillPage:
        return s.page_out(store.list_fills(offset, limit), s.fill_out, s.FillPage)

    @api.get("/fills/{fillNumber}", response_model=s.FillOut, tags=["fills"],
             responses=_errs(400, 401, 404))
    def get_fill(fillNumber: int) -> s.FillOut:
        return s.fill_out(store.get_fill(fillNumber))

    @api.get("/fills/{fillNumber}/runs", response_model=s.RunPage, tags=["fills"],
             responses=_errs(400, 401, 404))
    def list_fill_runs(
        fillNumber: int, offset: int = _offset_q(), limit: int = _limit_q()
    ) -> s.RunPage:
        store.get_fill(fillNumber)
        page = store.list_runs(RunQuery(fill_number=fillNumber), offset, limit)
        return s.page_out(page, s.run_out, s.RunPage)

    # -- runs ---------------------------------------------------------------------

    @api.post("/runs", response_model=s.RunOut, status_code=201, tags=["runs"],
              responses=_errs(400, 401, 404))
    def start_run(payload: s.RunCreate, actor: Actor) -> s.RunOut:
        run = store.create_run(
            payload.run_type,
            start_time=payload.start_time,
            fill_number=payload.fill_number,
            configuration=payload.configuration,
            tags=payload.tags,
            actor=actor,
        )
        return s.run_out(run)

    @api.get("/runs", response_model=s.RunPage, tags=["runs"], responses=_errs(400, 401))
    def list_runs(
        run_min: Annotated[int | None, Query(ge=1)] = None,
        run_max: Annotated[int | None, Query(ge=1)] = None,
        time_from: Annotated[datetime | None, Query(alias="from")] = None,
        time_to: Annotated[datetime | None, Query(alias="to")] = None,
        type_: Annotated[str | None, Query(alias="type")] = None,
        quality: str | None = None,
        state: str | None = None,
        fill: Annotated[int | None, Query(ge=1)] = None,
        tags: str | None = None,
        offset: int = _offset_q(),
        limit: int = _limit_q(),
    ) -> s.RunPage:
        run_range = None
        if run_min is not None or run_max is not None:
            run_range = (run_min or 1, run_max if run_max is not None else _RUN_NUMBER_MAX)
        q = RunQuery(
            run_number_range=run_range,
            time_range=_time_range(time_from, time_to),
            run_types=_parse_enum_set(type_, RunType, "type"),
            qualities=_parse_enum_set(quality, RunQuality, "quality"),
            states=_parse_enum_set(state, RunState, "state"),
            fill_number=fill,
            tags_all=_tag_set(tags),
        )
        return s.page_out(store.list_runs(q, offset, limit), s.run_out, s.RunPage)

    @api.get("/runs/{runNumber}", response_model=s.RunOut, tags=["runs"],
             responses=_errs(400, 401, 404))
    def get_run(runNumber: int) -> s.RunOut:
        return s.run_out(store.get_run(runNumber))

    @api.patch("/runs/{runNumber}", response_model=s.RunOut, tags=["runs"],
               responses=_errs(400, 401, 404, 409))
    def patch_run(runNumber: int, payload: s.RunPatch, actor: Actor) -> s.RunOut:
        if payload.end is not None:
            event = EndRun(end_time=payload.end.end_time or utc_now())
        else:
            event = SetQuality(quality=payload.quality)
        return s.run_out(store.mutate_run(runNumber, event, actor=actor))

    @api.post("/runs/{runNumber}/tags", response_model=s.RunOut, tags=["runs"],
              responses=_errs(400, 401, 404))
    def add_run_tag(runNumber: int, payload: s.TagAdd, actor: Actor) -> s.RunOut:
        return s.run_out(store.mutate_run(runNumber, AddTag(tag=payload.tag), actor=actor))

    @api.delete("/runs/{runNumber}/tags/{tag}", response_model=s.RunOut, tags=["runs"],
                responses=_errs(400, 401, 404))
    def remove_run_tag(runNumber: int, tag: str, actor: Actor) -> s.RunOut:
        return s.run_out(store.mutate_run(runNumber, RemoveTag(tag=tag), actor=actor))

    # -- passes -------------------------------------------------------------------

    @api.post("/passes", response_model=s.PassOut, status_code=201, tags=["passes"],
              responses=_errs(400, 401, 404, 422))
    def create_pass(payload: s.PassCreate, actor: Actor) -> s.PassOut:
        if payload.input.kind not in PASS_INPUT_KINDS:
            raise ApiError(
                422,
                "INVALID",
                f"pass input kind must be RUN or PASS, got {payload.input.kind.value}",
            )
        rec = store.create_pass(
            payload.name, payload.input.to_domain(), payload.configuration, actor=actor
        )
        return s.pass_out(rec)

    @api.get("/passes", response_model=s.PassPage, tags=["passes"], responses=_errs(400, 401))
    def list_passes(offset: int = _offset_q(), limit: int = _limit_q()) -> s.PassPage:
        return s.page_out(store.list_passes(offset, limit), s.pass_out, s.PassPage)

    @api.get("/passes/{id}", response_model=s.PassOut, tags=["passes"],
             responses=_errs(400, 401, 404))
    def get_pass(id: int) -> s.PassOut:
        return s.pass_out(store.get_pass(id))

    @api.get("/passes/{id}/lineage", response_model=s.LineageOut, tags=["passes"],
             responses=_errs(400, 401, 404))
    def get_lineage(id: int) -> s.LineageOut:
        chain = resolve_lineage(id, store.resolve_ref)
        return s.LineageOut(
            pass_id=id, chain=[s.EntityRefOut(kind=r.kind, id=r.id) for r in chain]
        )

    @api.patch("/passes/{id}", response_model=s.PassOut, tags=["passes"],
               responses=_errs(400, 401, 404))
    def patch_pass(id: int, payload: s.PassPatch, actor: Actor) -> s.PassOut:
        return s.pass_out(store.set_pass_status(id, payload.status, actor=actor))

    # -- logs ---------------------------------------------------------------------

    @api.post("/logs", response_model=s.LogOut, status_code=201, tags=["logs"],
              responses=_errs(400, 401, 404))
    def create_log(payload: s.LogCreate, actor: Actor) -> s.LogOut:
        associations = [ref.to_domain() for ref in payload.associations]
        if payload.template_name is not None:
            template = store.get_template(payload.template_name)
            rendered = render_template(template, payload.values)
            title, body = rendered.title, rendered.body
            tags = set(payload.tags) | set(rendered.tags)
        else:
            title, body, tags = payload.title, payload.body, set(payload.tags)
        log = store.create_log(title, body, associations, tags, actor=actor)
        return s.log_out(log)

    @api.get("/logs", response_model=s.LogPage, tags=["logs"], responses=_errs(400, 401))
    def list_logs(
        text: str | None = None,
        tags: str | None = None,
        author: str | None = None,
        run: Annotated[int | None, Query(ge=1)] = None,
        fill: Annotated[int | None, Query(ge=1)] = None,
        pass_id: Annotated[int | None, Query(alias="pass", ge=1)] = None,
        time_from: Annotated[datetime | None, Query(alias="from")] = None,
        time_to: Annotated[datetime | None, Query(alias="to")] = None,
        offset: int = _offset_q(),
        limit: int = _limit_q(),
    ) -> s.LogPage:
        q = LogQuery(
            text=tuple(text.split()) if text else None,
            tags_all=_tag_set(tags),
            author=author,
            association=_association(run, fill, pass_id),
            time_range=_time_range(time_from, time_to),
        )
        return s.page_out(store.list_logs(q, offset, limit), s.log_out, s.LogPage)

    @api.get("/logs/{id}", response_model=s.LogOut, tags=["logs"],
             responses=_errs(400, 401, 404))
    def get_log(id: int) -> s.LogOut:
        return s.log_out(store.get_log(id))

    @api.patch("/logs/{id}", response_model=s.LogOut, tags=["logs"],
               responses=_errs(400, 401, 404))
    def edit_log(id: int, payload: s.LogPatch, actor: Actor) -> s.LogOut:
        log = store.edit_log(id, title=payload.title, body=payload.body, actor=actor)
        return s.log_out(log)

    @api.get("/logs/{id}/revisions", response_model=list[s.RevisionOut], tags=["logs"],
             responses=_errs(400, 401, 404))
    def log_revisions(id: int) -> list[s.RevisionOut]:
        return [s.revision_out(rev) for rev in store.get_log(id).revisions]

    @api.post("/logs/{id}/attachments", response_model=s.AttachmentOut, status_code=201,
              tags=["logs"], responses=_errs(400, 401, 404, 413))
    async def upload_attachment(
        id: int, actor: Actor, file: UploadFile = File(...)
    ) -> s.AttachmentOut:
        data = await file.read()
        if len(data) > config.max_upload_bytes:
            raise TooLarge(
                f"attachment of {len(data)} bytes exceeds limit {config.max_upload_bytes}"
            )
        attachment = store.put_attachment(
            data,
            filename=file.filename or "attachment.bin",
            media_type=file.content_type or "application/octet-stream",
            actor=actor,
            log_id=id,
        )
        return s.attachment_out(attachment)

    @api.get(
        "/attachments/{digest}",
        tags=["logs"],
        response_class=Response,
        responses={
            200: {
                # Served under the media type recorded at upload time.
                "description": "The attachment bytes, bit-identical to the upload",
                "content": {"*/*": {"schema": {"type": "string", "format": "binary"}}},
            },
            **_errs(400, 401, 404),
        },
    )
    def download_attachment(digest: str) -> Response:
        content, meta = store.get_attachment(digest)
        return Response(
            content=content,
            media_type=meta.media_type,
            headers={"Content-Disposition": f'attachment; filename="{meta.filename}"'},
        )

    # -- templates ------------------------------------------------------------------

    @api.get("/templates", response_model=s.TemplatePage, tags=["templates"],
             responses=_errs(400, 401))
    def list_templates(offset: int = _offset_q(), limit: int = _limit_q()) -> s.TemplatePage:
        return s.page_out(store.list_templates(offset, limit), s.template_out, s.TemplatePage)

    @api.post("/templates", response_model=s.TemplateOut, status_code=201, tags=["templates"],
              responses=_errs(400, 401, 409))
    def create_template(payload: s.TemplateCreate, actor: Actor) -> s.TemplateOut:
        template = store.create_template(
            payload.template_name,
            payload.title_pattern,
            payload.body_pattern,
            required_fields=payload.required_fields,
            default_tags=payload.default_tags,
            actor=actor,
        )
        return s.template_out(template)

    # -- audit and reports -------------------------------------------------------------

    @api.get("/audit", response_model=s.AuditPage, tags=["audit"], responses=_errs(400, 401))
    def read_audit(
        since: Annotated[int, Query(ge=0)] = 0, limit: int = _limit_q()
    ) -> s.AuditPage:
        return s.page_out(store.read_audit(since, limit), s.audit_out, s.AuditPage)

    @api.get(
        "/reports/overview",
        response_model=s.OverviewOut,
        tags=["reports"],
        responses={
            200: {"content": {"text/csv": {"schema": {"type": "string"}}}},
            **_errs(400, 401),
        },
    )
    def report_overview(
        time_from: Annotated[datetime | None, Query(alias="from")] = None,
        time_to: Annotated[datetime | None, Query(alias="to")] = None,
        format: str = "json",
    ):
        report = reports_mod.overview(store, _clamp_opt(time_from), _clamp_opt(time_to))
        if format == "csv":
            return PlainTextResponse(reports_mod.overview_csv(report), media_type="text/csv")
        if format != "json":
            raise Invalid(f"format must be json or csv, got {format!r}")
        return s.overview_out(report)

    @api.get(
        "/reports/runs-per-fill",
        response_model=list[s.RunsPerFillRowOut],
        tags=["reports"],
        responses={
            200: {"content": {"text/csv": {"schema": {"type": "string"}}}},
            **_errs(400, 401),
        },
    )
    def report_runs_per_fill(
        time_from: Annotated[datetime | None, Query(alias="from")] = None,
        time_to: Annotated[datetime | None, Query(alias="to")] = None,
        format: str = "json",
    ):
        rows = reports_mod.runs_per_fill(store, _clamp_opt(time_from), _clamp_opt(time_to))
        if format == "csv":
            return PlainTextResponse(reports_mod.runs_per_fill_csv(rows), media_type="text/csv")
        if format != "json":
            raise Invalid(f"format must be json or csv, got {format!r}")
        return s.runs_per_fill_out(rows)

    app.include_router(public)
    app.include_router(api)

    if config.ui_dir and Path(config.ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    # -- error envelope -----------------------------------------------------------------

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return _envelope(exc.status, exc.code, exc.message, exc.detail)

    @app.exception_handler(RunlogError)
    async def on_runlog_error(request: Request, exc: RunlogError):
        translated = _translate(exc)
        return _envelope(translated.status, translated.code, translated.message, translated.detail)

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _envelope(
            400, "INVALID", "request validation failed", {"errors": jsonable_encoder(exc.errors())}
        )

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        code = _STATUS_CODES.get(exc.status_code, "INTERNAL")
        return _envelope(exc.status_code, code, str(exc.detail))

    def custom_openapi() -> dict:
        if app.openapi_schema:
            return app.openapi_schema
        schema = get_openapi(
            title=app.title,
            version=app.version,
            description=(
                "Bookkeeping API for accelerator data taking: fills, runs, "
                "reconstruction passes, logbook, templates, attachments, audit "
                "trail and reports. Every non-2xx response body is an "
                "ErrorEnvelope. Authentication: `Authorization: Bearer <token>`."
            ),
            routes=app.routes,
        )
        _prune_auto_validation_errors(schema)
        app.openapi_schema = schema
        return schema

    app.openapi = custom_openapi
    return app


def api_route_paths(app: FastAPI) -> set[str]:
    """The live route table: every HTTP API path the app actually serves."""
    from fastapi.routing import APIRoute

    paths: set[str] = set()
    stack = list(app.routes)
    while stack:
        route = stack.pop()
        if isinstance(route, APIRoute):
            paths.add(route.path)
        inner = getattr(route, "original_router", None)
        if inner is not None:
            stack.extend(inner.routes)
    return paths


def _prune_auto_validation_errors(schema: dict) -> None:
    """Replace the framework's auto-documented 422 with our envelope story."""
    for path_item in schema.get("paths", {}).values():
        for operation in path_item.values():
            if not isinstance(operation, dict):
                continue
            responses = operation.get("responses", {})
            auto = responses.get("422")
            if auto and "HTTPValidationError" in str(auto):
                del responses["422"]
    components = schema.get("components", {}).get("schemas", {})
    components.pop("HTTPValidationError", None)
    components.pop("ValidationError", None)


def _split_csv(raw: str | None) -> list[str]:
    if raw is None:
        return []
    return [part for part in (p.strip() for p in raw.split(",")) if part]


def _tag_set(raw: str | None) -> frozenset[str] | None:
    values = _split_csv(raw)
    if not values:
        return None
    return frozenset(normalize_tag(t) for t in values)


def _parse_enum_set(raw: str | None, enum_type, label: str):
    values = _split_csv(raw)
    if not values:
        return None
    try:
        return frozenset(enum_type(v) for v in values)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_type)
        raise Invalid(f"bad {label} value in {raw!r}; allowed: {allowed}") from None


def _time_range(lo: datetime | None, hi: datetime | None):
    if lo is None and hi is None:
        return None
    return (_clamp_opt(lo) or _EPOCH_MIN, _clamp_opt(hi) or _EPOCH_MAX)


def _clamp_opt(dt: datetime | None) -> datetime | None:
    return None if dt is None else clamp_ms(dt)


def _association(run: int | None, fill: int | None, pass_id: int | None) -> EntityRef | None:
    supplied = [x for x in (run, fill, pass_id) if x is not None]
    if len(supplied) > 1:
        raise Invalid("supply at most one of run, fill, pass")
    if run is not None:
        return EntityRef(RefKind.RUN, run)
    if fill is not None:
        return EntityRef(RefKind.FILL, fill)
    if pass_id is not None:
        return EntityRef(RefKind.PASS, pass_id)
    return None

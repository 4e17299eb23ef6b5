"""Durable catalogue repository.

SQLite-backed. Every mutating operation writes the entity change and one
audit record in a single transaction, so a crash between any two steps
leaves either both or neither. Identifier allocation is monotonic and
never reuses a number. Nothing is ever deleted.

Thread safety: one store object may be shared by any number of request
threads; a store-wide lock serializes access, which makes every mutation
linearizable and lets readers observe only committed states.
"""

from __future__ import annotations

import sqlite3
import threading
from contextlib import contextmanager
from datetime import datetime
from typing import Callable, Iterable, Mapping, Sequence

from runlog.canonical import canonical_json, format_ts, payload_digest, sha256_hex, utc_now
from runlog.domain import (
    ActorRef,
    Attachment,
    EndRun,
    EntityRef,
    LhcFill,
    LogEntry,
    LogOrigin,
    LogQuery,
    PassStatus,
    ReconstructionPass,
    RefKind,
    Revision,
    Run,
    RunEvent,
    RunQuery,
    RunType,
    SetQuality,
    AddTag,
    RemoveTag,
    Template,
    apply_run_event,
    match_log,
    match_run,
    new_log_entry,
    normalize_tag,
    normalize_tags,
)
from runlog.domain.models import ASSOCIATION_KINDS, PASS_INPUT_KINDS
from runlog.errors import (
    Conflict,
    Invalid,
    InvalidQuery,
    NotFound,
    TooLarge,
    UnknownDigest,
    UnknownReference,
)
from runlog.store.records import AuditAction, AuditRecord, AuditReport, Page

DEFAULT_MAX_ATTACHMENT_BYTES = 64 * 1024 * 1024
DEFAULT_PAGE_LIMIT = 100
MAX_PAGE_LIMIT = 1000

# Crash-injection points, in mutation order.
CRASH_BEFORE_AUDIT = "before_audit"
CRASH_BEFORE_COMMIT = "before_commit"
CRASH_AFTER_COMMIT = "after_commit"

_SCHEMA = """
CREATE TABLE IF NOT EXISTS fills (
    fill_number INTEGER PRIMARY KEY,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS runs (
    run_number INTEGER PRIMARY KEY,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS passes (
    pass_id INTEGER PRIMARY KEY,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS logs (
    log_id INTEGER PRIMARY KEY,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS templates (
    template_id INTEGER PRIMARY KEY,
    template_name TEXT NOT NULL UNIQUE,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS attachment_meta (
    digest TEXT PRIMARY KEY,
    body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS blobs (
    digest TEXT PRIMARY KEY,
    content BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS audit (
    seq INTEGER PRIMARY KEY,
    body TEXT NOT NULL,
    payload TEXT
);
"""


def _parse_json(text: str) -> dict:
    import json

    return json.loads(text)


class Store:
    def __init__(
        self,
        path: str = ":memory:",
        *,
        max_attachment_bytes: int = DEFAULT_MAX_ATTACHMENT_BYTES,
        clock: Callable[[], datetime] = utc_now,
        crash_hook: Callable[[str, AuditAction], None] | None = None,
    ):
        self.path = path
        self.max_attachment_bytes = max_attachment_bytes
        self._clock = clock
        self._crash_hook = crash_hook
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(path, check_same_thread=False, isolation_level=None)
        # WAL keeps commits durable with one sync instead of two and lets the
        # journal survive application crashes intact.
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=FULL")
        self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- transaction plumbing -------------------------------------------------

    @contextmanager
    def _mutation(self, action: AuditAction):
        with self._lock:
            self._conn.execute("BEGIN IMMEDIATE")
            try:
                yield self._conn
                self._crash_point(CRASH_BEFORE_COMMIT, action)
                self._conn.execute("COMMIT")
            except BaseException:
                # Equivalent to journal recovery after a crash: the open
                # transaction disappears without a trace.
                self._conn.execute("ROLLBACK")
                raise
        self._crash_point(CRASH_AFTER_COMMIT, action)

    def _crash_point(self, point: str, action: AuditAction) -> None:
        if self._crash_hook is not None:
            self._crash_hook(point, action)

    def _append_audit(
        self,
        action: AuditAction,
        target: EntityRef,
        payload: Mapping,
        actor: ActorRef,
    ) -> AuditRecord:
        self._crash_point(CRASH_BEFORE_AUDIT, action)
        row = self._conn.execute("SELECT COALESCE(MAX(seq), 0) + 1 FROM audit").fetchone()
        payload_text = canonical_json(payload)
        record = AuditRecord(
            seq=row[0],
            timestamp=self._clock(),
            actor=actor,
            action=action,
            target=target,
            payload_digest=sha256_hex(payload_text.encode("utf-8")),
        )
        self._conn.execute(
            "INSERT INTO audit (seq, body, payload) VALUES (?, ?, ?)",
            (record.seq, canonical_json(record.to_dict()), payload_text),
        )
        return record

    def _next_id(self, table: str, column: str) -> int:
        row = self._conn.execute(
            f"SELECT COALESCE(MAX({column}), 0) + 1 FROM {table}"
        ).fetchone()
        return row[0]

    # -- creation -------------------------------------------------------------

    def create_fill(
        self,
        fill_number: int,
        beam_type: str,
        stable_beams_start: datetime | None = None,
        stable_beams_end: datetime | None = None,
        *,
        actor: ActorRef,
    ) -> LhcFill:
        """Register a fill under its accelerator-assigned number."""
        with self._mutation(AuditAction.CREATE_FILL):
            exists = self._conn.execute(
                "SELECT 1 FROM fills WHERE fill_number = ?", (fill_number,)
            ).fetchone()
            if exists:
                raise Conflict(f"fill {fill_number} already exists")
            fill = LhcFill(
                fill_number=fill_number,
                beam_type=beam_type,
                created_at=self._clock(),
                stable_beams_start=stable_beams_start,
                stable_beams_end=stable_beams_end,
            )
            self._conn.execute(
                "INSERT INTO fills (fill_number, body) VALUES (?, ?)",
                (fill.fill_number, canonical_json(fill.to_dict())),
            )
            self._append_audit(
                AuditAction.CREATE_FILL,
                EntityRef(RefKind.FILL, fill.fill_number),
                {
                    "fill_number": fill_number,
                    "beam_type": beam_type,
                    "stable_beams_start": _opt(stable_beams_start),
                    "stable_beams_end": _opt(stable_beams_end),
                },
                actor,
            )
        return fill

    def create_run(
        self,
        run_type: RunType,
        start_time: datetime | None = None,
        fill_number: int | None = None,
        configuration: Mapping[str, str] | None = None,
        tags: Iterable[str] = (),
        *,
        actor: ActorRef,
    ) -> Run:
        """Start a run; its number is allocated monotonically by the store."""
        with self._mutation(AuditAction.CREATE_RUN):
            if fill_number is not None:
                fill = self._conn.execute(
                    "SELECT 1 FROM fills WHERE fill_number = ?", (fill_number,)
                ).fetchone()
                if not fill:
                    raise UnknownReference(f"fill {fill_number} does not exist")
            run = Run(
                run_number=self._next_id("runs", "run_number"),
                run_type=RunType(run_type),
                state="ONGOING",
                start_time=start_time or self._clock(),
                fill_number=fill_number,
                configuration=configuration or {},
                tags=normalize_tags(tags),
            )
            self._conn.execute(
                "INSERT INTO runs (run_number, body) VALUES (?, ?)",
                (run.run_number, canonical_json(run.to_dict())),
            )
            self._append_audit(
                AuditAction.CREATE_RUN,
                EntityRef(RefKind.RUN, run.run_number),
                {
                    "run_type": run.run_type.value,
                    "start_time": format_ts(run.start_time),
                    "fill_number": fill_number,
                    "configuration": dict(sorted(run.configuration.items())),
                    "tags": sorted(run.tags),
                },
                actor,
            )
        return run

    def create_pass(
        self,
        name: str,
        input_ref: EntityRef,
        configuration: Mapping[str, str] | None = None,
        *,
        actor: ActorRef,
    ) -> ReconstructionPass:
        with self._mutation(AuditAction.CREATE_PASS):
            if input_ref.kind not in PASS_INPUT_KINDS:
                raise Invalid(
                    f"pass input kind must be RUN or PASS, got {input_ref.kind.value}"
                )
            if not self._ref_exists(input_ref):
                raise UnknownReference(f"pass input {input_ref.kind.value} {input_ref.id} does not exist")
            rec_pass = ReconstructionPass(
                pass_id=self._next_id("passes", "pass_id"),
                name=name,
                input=input_ref,
                status="PENDING",
                created_at=self._clock(),
                configuration=configuration or {},
            )
            self._conn.execute(
                "INSERT INTO passes (pass_id, body) VALUES (?, ?)",
                (rec_pass.pass_id, canonical_json(rec_pass.to_dict())),
            )
            self._append_audit(
                AuditAction.CREATE_PASS,
                EntityRef(RefKind.PASS, rec_pass.pass_id),
                {
                    "name": name,
                    "input": input_ref.to_dict(),
                    "configuration": dict(sorted((configuration or {}).items())),
                },
                actor,
            )
        return rec_pass

    def create_log(
        self,
        title: str,
        body: str,
        associations: Sequence[EntityRef] = (),
        tags: Iterable[str] = (),
        *,
        actor: ActorRef,
        origin: LogOrigin | None = None,
    ) -> LogEntry:
        """Create a log entry; origin defaults from the actor's role."""
        if origin is None:
            origin = LogOrigin.PROCESS if actor.role.value == "MACHINE" else LogOrigin.HUMAN
        with self._mutation(AuditAction.CREATE_LOG):
            for ref in associations:
                if ref.kind not in ASSOCIATION_KINDS:
                    raise Invalid(f"log association kind {ref.kind.value} not allowed")
                if not self._ref_exists(ref):
                    raise UnknownReference(
                        f"association {ref.kind.value} {ref.id} does not exist"
                    )
            log = new_log_entry(
                log_id=self._next_id("logs", "log_id"),
                title=title,
                body=body,
                author=actor,
                origin=origin,
                created_at=self._clock(),
                associations=associations,
                tags=tags,
            )
            self._conn.execute(
                "INSERT INTO logs (log_id, body) VALUES (?, ?)",
                (log.log_id, canonical_json(log.to_dict())),
            )
            self._append_audit(
                AuditAction.CREATE_LOG,
                EntityRef(RefKind.LOG, log.log_id),
                {
                    "title": title,
                    "body": body,
                    "origin": log.origin.value,
                    "associations": [r.to_dict() for r in log.associations],
                    "tags": sorted(log.tags),
                },
                actor,
            )
        return log

    def create_template(
        self,
        template_name: str,
        title_pattern: str,
        body_pattern: str,
        required_fields: Iterable[str] = (),
        default_tags: Iterable[str] = (),
        *,
        actor: ActorRef,
    ) -> Template:
        with self._mutation(AuditAction.CREATE_TEMPLATE):
            exists = self._conn.execute(
                "SELECT 1 FROM templates WHERE template_name = ?", (template_name,)
            ).fetchone()
            if exists:
                raise Conflict(f"template {template_name!r} already exists")
            template = Template(
                template_name=template_name,
                title_pattern=title_pattern,
                body_pattern=body_pattern,
                required_fields=frozenset(required_fields),
                default_tags=normalize_tags(default_tags),
            )
            template_id = self._next_id("templates", "template_id")
            self._conn.execute(
                "INSERT INTO templates (template_id, template_name, body) VALUES (?, ?, ?)",
                (template_id, template_name, canonical_json(template.to_dict())),
            )
            self._append_audit(
                AuditAction.CREATE_TEMPLATE,
                EntityRef(RefKind.TEMPLATE, template_id),
                template.to_dict(),
                actor,
            )
        return template

    # -- mutation -------------------------------------------------------------

    def mutate_run(self, run_number: int, event: RunEvent, *, actor: ActorRef) -> Run:
        action, payload = _run_event_audit(run_number, event)
        with self._mutation(action):
            run = self._get_run_locked(run_number)
            updated = apply_run_event(run, event)
            self._conn.execute(
                "UPDATE runs SET body = ? WHERE run_number = ?",
                (canonical_json(updated.to_dict()), run_number),
            )
            self._append_audit(action, EntityRef(RefKind.RUN, run_number), payload, actor)
        return updated

    def edit_log(
        self,
        log_id: int,
        *,
        title: str | None = None,
        body: str | None = None,
        actor: ActorRef,
    ) -> LogEntry:
        """Append a revision; earlier content stays retrievable forever."""
        with self._mutation(AuditAction.EDIT_LOG):
            log = self._get_log_locked(log_id)
            new_title = log.title if title is None else title
            new_body = log.body if body is None else body
            revision = Revision(
                revision_index=len(log.revisions),
                title=new_title,
                body=new_body,
                edited_by=actor,
                edited_at=self._clock(),
            )
            updated = LogEntry(
                log_id=log.log_id,
                title=new_title,
                body=new_body,
                author=log.author,
                origin=log.origin,
                created_at=log.created_at,
                associations=log.associations,
                tags=log.tags,
                attachments=log.attachments,
                revisions=log.revisions + (revision,),
            )
            self._conn.execute(
                "UPDATE logs SET body = ? WHERE log_id = ?",
                (canonical_json(updated.to_dict()), log_id),
            )
            self._append_audit(
                AuditAction.EDIT_LOG,
                EntityRef(RefKind.LOG, log_id),
                {"log_id": log_id, "title": new_title, "body": new_body},
                actor,
            )
        return updated

    def set_pass_status(
        self, pass_id: int, status: PassStatus, *, actor: ActorRef
    ) -> ReconstructionPass:
        from dataclasses import replace

        with self._mutation(AuditAction.SET_PASS_STATUS):
            rec_pass = self._get_pass_locked(pass_id)
            updated = replace(rec_pass, status=PassStatus(status))
            self._conn.execute(
                "UPDATE passes SET body = ? WHERE pass_id = ?",
                (canonical_json(updated.to_dict()), pass_id),
            )
            self._append_audit(
                AuditAction.SET_PASS_STATUS,
                EntityRef(RefKind.PASS, pass_id),
                {"pass_id": pass_id, "status": updated.status.value},
                actor,
            )
        return updated

    # -- attachments ----------------------------------------------------------

    def put_attachment(
        self,
        data: bytes,
        filename: str,
        media_type: str,
        *,
        actor: ActorRef,
        log_id: int,
    ) -> Attachment:
        """Store a blob content-addressed and attach it to a log entry.

        Identical bytes are stored once regardless of how often they are
        uploaded; metadata for a digest is pinned by the first upload.
        """
        if len(data) > self.max_attachment_bytes:
            raise TooLarge(
                f"attachment of {len(data)} bytes exceeds limit {self.max_attachment_bytes}"
            )
        attachment = Attachment(
            digest=sha256_hex(data),
            filename=filename,
            media_type=media_type,
            size_bytes=len(data),
        )
        with self._mutation(AuditAction.ATTACH):
            log = self._get_log_locked(log_id)
            self._conn.execute(
                "INSERT OR IGNORE INTO blobs (digest, content) VALUES (?, ?)",
                (attachment.digest, data),
            )
            self._conn.execute(
                "INSERT OR IGNORE INTO attachment_meta (digest, body) VALUES (?, ?)",
                (attachment.digest, canonical_json(attachment.to_dict())),
            )
            updated = LogEntry(
                log_id=log.log_id,
                title=log.title,
                body=log.body,
                author=log.author,
                origin=log.origin,
                created_at=log.created_at,
                associations=log.associations,
                tags=log.tags,
                attachments=log.attachments + (attachment,),
                revisions=log.revisions,
            )
            self._conn.execute(
                "UPDATE logs SET body = ? WHERE log_id = ?",
                (canonical_json(updated.to_dict()), log_id),
            )
            self._append_audit(
                AuditAction.ATTACH,
                EntityRef(RefKind.LOG, log_id),
                {"log_id": log_id, **attachment.to_dict()},
                actor,
            )
        return attachment

    def get_attachment(self, digest: str) -> tuple[bytes, Attachment]:
        with self._lock:
            row = self._conn.execute(
                "SELECT content FROM blobs WHERE digest = ?", (digest,)
            ).fetchone()
            meta = self._conn.execute(
                "SELECT body FROM attachment_meta WHERE digest = ?", (digest,)
            ).fetchone()
        if row is None or meta is None:
            raise UnknownDigest(f"no blob stored under digest {digest}")
        return bytes(row[0]), Attachment.from_dict(_parse_json(meta[0]))

    def blob_count(self) -> int:
        with self._lock:
            return self._conn.execute("SELECT COUNT(*) FROM blobs").fetchone()[0]

    # -- reads ----------------------------------------------------------------

    def get_fill(self, fill_number: int) -> LhcFill:
        with self._lock:
            row = self._conn.execute(
                "SELECT body FROM fills WHERE fill_number = ?", (fill_number,)
            ).fetchone()
        if row is None:
            raise NotFound(f"fill {fill_number} does not exist")
        return LhcFill.from_dict(_parse_json(row[0]))

    def get_run(self, run_number: int) -> Run:
        with self._lock:
            return self._get_run_locked(run_number)

    def get_pass(self, pass_id: int) -> ReconstructionPass:
        with self._lock:
            return self._get_pass_locked(pass_id)

    def get_log(self, log_id: int) -> LogEntry:
        with self._lock:
            return self._get_log_locked(log_id)

    def get_template(self, template_name: str) -> Template:
        with self._lock:
            row = self._conn.execute(
                "SELECT body FROM templates WHERE template_name = ?", (template_name,)
            ).fetchone()
        if row is None:
            raise NotFound(f"template {template_name!r} does not exist")
        return Template.from_dict(_parse_json(row[0]))

    def resolve_ref(self, ref: EntityRef):
        """Entity behind a reference, or None. Suits the lineage resolver."""
        with self._lock:
            table, column = _REF_TABLES[ref.kind]
            row = self._conn.execute(
                f"SELECT body FROM {table} WHERE {column} = ?", (ref.id,)
            ).fetchone()
        if row is None:
            return None
        return _REF_PARSERS[ref.kind](_parse_json(row[0]))

    def all_fills(self) -> list[LhcFill]:
        return self._load_all("fills", "fill_number", LhcFill.from_dict)

    def all_runs(self) -> list[Run]:
        return self._load_all("runs", "run_number", Run.from_dict)

    def all_passes(self) -> list[ReconstructionPass]:
        return self._load_all("passes", "pass_id", ReconstructionPass.from_dict)

    def all_logs(self) -> list[LogEntry]:
        return self._load_all("logs", "log_id", LogEntry.from_dict)

    def all_templates(self) -> list[tuple[int, Template]]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT template_id, body FROM templates ORDER BY template_id"
            ).fetchall()
        return [(row[0], Template.from_dict(_parse_json(row[1]))) for row in rows]

    def all_attachment_meta(self) -> list[Attachment]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT body FROM attachment_meta ORDER BY digest"
            ).fetchall()
        return [Attachment.from_dict(_parse_json(row[0])) for row in rows]

    def all_audit(self) -> list[tuple[AuditRecord, str | None]]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT body, payload FROM audit ORDER BY seq"
            ).fetchall()
        return [(AuditRecord.from_dict(_parse_json(row[0])), row[1]) for row in rows]

    def _load_all(self, table: str, column: str, parse) -> list:
        with self._lock:
            rows = self._conn.execute(
                f"SELECT body FROM {table} ORDER BY {column}"
            ).fetchall()
        return [parse(_parse_json(row[0])) for row in rows]

    def counts(self) -> dict[str, int]:
        with self._lock:
            out = {}
            for key, table in (
                ("fills", "fills"),
                ("runs", "runs"),
                ("passes", "passes"),
                ("logs", "logs"),
                ("templates", "templates"),
                ("attachments", "attachment_meta"),
                ("audit", "audit"),
            ):
                out[key] = self._conn.execute(f"SELECT COUNT(*) FROM {table}").fetchone()[0]
            return out

    # -- listings ---------------------------------------------------------------

    def list_runs(self, q: RunQuery | None = None, offset: int = 0, limit: int = DEFAULT_PAGE_LIMIT) -> Page[Run]:
        q = q or RunQuery()
        q.validate()
        _check_paging(offset, limit)
        matches = [run for run in self.all_runs() if match_run(run, q)]
        matches.sort(key=lambda r: r.run_number, reverse=True)
        return _page(matches, offset, limit)

    def list_logs(self, q: LogQuery | None = None, offset: int = 0, limit: int = DEFAULT_PAGE_LIMIT) -> Page[LogEntry]:
        q = q or LogQuery()
        q.validate()
        _check_paging(offset, limit)
        matches = [log for log in self.all_logs() if match_log(log, q)]
        matches.sort(key=lambda e: e.log_id, reverse=True)
        return _page(matches, offset, limit)

    def list_fills(self, offset: int = 0, limit: int = DEFAULT_PAGE_LIMIT) -> Page[LhcFill]:
        _check_paging(offset, limit)
        fills = sorted(self.all_fills(), key=lambda f: f.fill_number, reverse=True)
        return _page(fills, offset, limit)

    def list_passes(self, offset: int = 0, limit: int = DEFAULT_PAGE_LIMIT) -> Page[ReconstructionPass]:
        _check_paging(offset, limit)
        passes = sorted(self.all_passes(), key=lambda p: p.pass_id, reverse=True)
        return _page(passes, offset, limit)

    def list_templates(self, offset: int = 0, limit: int = DEFAULT_PAGE_LIMIT) -> Page[Template]:
        _check_paging(offset, limit)
        templates = [t for _, t in sorted(self.all_templates(), key=lambda x: x[0], reverse=True)]
        return _page(templates, offset, limit)

    # -- audit ------------------------------------------------------------------

    def read_audit(self, since_seq: int = 0, limit: int = DEFAULT_PAGE_LIMIT) -> Page[AuditRecord]:
        """Records with seq > since_seq, ascending (tail-follow order)."""
        _check_paging(0, limit)
        if since_seq < 0:
            raise InvalidQuery("since_seq must be >= 0")
        with self._lock:
            total = self._conn.execute(
                "SELECT COUNT(*) FROM audit WHERE seq > ?", (since_seq,)
            ).fetchone()[0]
            rows = self._conn.execute(
                "SELECT body FROM audit WHERE seq > ? ORDER BY seq LIMIT ?",
                (since_seq, limit),
            ).fetchall()
        items = tuple(AuditRecord.from_dict(_parse_json(row[0])) for row in rows)
        return Page(items=items, total=total, offset=0, limit=limit)

    def verify_audit(self) -> AuditReport:
        """Check seq contiguity and recompute payload digests."""
        records = self.all_audit()
        first_gap = None
        expected = 1
        for record, _ in records:
            if record.seq != expected and first_gap is None:
                first_gap = expected
            expected = record.seq + 1
        digest_failures = []
        for record, payload in records:
            if payload is not None and sha256_hex(payload.encode("utf-8")) != record.payload_digest:
                digest_failures.append(record.seq)
        return AuditReport(
            contiguous=first_gap is None,
            count=len(records),
            first_gap=first_gap,
            digest_failures=tuple(digest_failures),
        )

    def verify_integrity(self) -> list[str]:
        """Referential-integrity sweep; returns human-readable violations."""
        problems: list[str] = []
        with self._lock:
            fills = {f.fill_number for f in self.all_fills()}
            runs = {r.run_number for r in self.all_runs()}
            passes = {p.pass_id for p in self.all_passes()}
            blob_digests = {
                row[0]
                for row in self._conn.execute("SELECT digest FROM blobs").fetchall()
            }
            for run in self.all_runs():
                if run.fill_number is not None and run.fill_number not in fills:
                    problems.append(f"run {run.run_number} references missing fill {run.fill_number}")
            for rec_pass in self.all_passes():
                pool = runs if rec_pass.input.kind is RefKind.RUN else passes
                if rec_pass.input.id not in pool:
                    problems.append(
                        f"pass {rec_pass.pass_id} references missing "
                        f"{rec_pass.input.kind.value} {rec_pass.input.id}"
                    )
            for log in self.all_logs():
                for ref in log.associations:
                    pool = {RefKind.RUN: runs, RefKind.FILL: fills, RefKind.PASS: passes}[ref.kind]
                    if ref.id not in pool:
                        problems.append(
                            f"log {log.log_id} references missing {ref.kind.value} {ref.id}"
                        )
                for attachment in log.attachments:
                    if attachment.digest not in blob_digests:
                        problems.append(
                            f"log {log.log_id} attachment blob {attachment.digest} missing"
                        )
        return problems

    # -- internals ---------------------------------------------------------------

    def _ref_exists(self, ref: EntityRef) -> bool:
        table, column = _REF_TABLES[ref.kind]
        row = self._conn.execute(
            f"SELECT 1 FROM {table} WHERE {column} = ?", (ref.id,)
        ).fetchone()
        return row is not None

    def _get_run_locked(self, run_number: int) -> Run:
        row = self._conn.execute(
            "SELECT body FROM runs WHERE run_number = ?", (run_number,)
        ).fetchone()
        if row is None:
            raise NotFound(f"run {run_number} does not exist")
        return Run.from_dict(_parse_json(row[0]))

    def _get_pass_locked(self, pass_id: int) -> ReconstructionPass:
        row = self._conn.execute(
            "SELECT body FROM passes WHERE pass_id = ?", (pass_id,)
        ).fetchone()
        if row is None:
            raise NotFound(f"pass {pass_id} does not exist")
        return ReconstructionPass.from_dict(_parse_json(row[0]))

    def _get_log_locked(self, log_id: int) -> LogEntry:
        row = self._conn.execute(
            "SELECT body FROM logs WHERE log_id = ?", (log_id,)
        ).fetchone()
        if row is None:
            raise NotFound(f"log {log_id} does not exist")
        return LogEntry.from_dict(_parse_json(row[0]))


_REF_TABLES = {
    RefKind.RUN: ("runs", "run_number"),
    RefKind.FILL: ("fills", "fill_number"),
    RefKind.PASS: ("passes", "pass_id"),
    RefKind.LOG: ("logs", "log_id"),
    RefKind.TEMPLATE: ("templates", "template_id"),
}

_REF_PARSERS = {
    RefKind.RUN: Run.from_dict,
    RefKind.FILL: LhcFill.from_dict,
    RefKind.PASS: ReconstructionPass.from_dict,
    RefKind.LOG: LogEntry.from_dict,
    RefKind.TEMPLATE: Template.from_dict,
}


def _run_event_audit(run_number: int, event: RunEvent) -> tuple[AuditAction, dict]:
    if isinstance(event, EndRun):
        return AuditAction.END_RUN, {
            "run_number": run_number,
            "end_time": format_ts(event.end_time),
        }
    if isinstance(event, SetQuality):
        return AuditAction.SET_QUALITY, {
            "run_number": run_number,
            "quality": str(getattr(event.quality, "value", event.quality)),
        }
    if isinstance(event, AddTag):
        return AuditAction.TAG_RUN, {
            "run_number": run_number,
            "tag": normalize_tag(event.tag),
        }
    if isinstance(event, RemoveTag):
        return AuditAction.UNTAG_RUN, {
            "run_number": run_number,
            "tag": normalize_tag(event.tag),
        }
    raise TypeError(f"unknown run event {event!r}")


def _check_paging(offset: int, limit: int) -> None:
    if offset < 0:
        raise InvalidQuery("offset must be >= 0")
    if not 1 <= limit <= MAX_PAGE_LIMIT:
        raise InvalidQuery(f"limit must be within 1..{MAX_PAGE_LIMIT}")


def _page(matches: list, offset: int, limit: int) -> Page:
    return Page(
        items=tuple(matches[offset : offset + limit]),
        total=len(matches),
        offset=offset,
        limit=limit,
    )


def _opt(dt: datetime | None) -> str | None:
    return None if dt is None else format_ts(dt)

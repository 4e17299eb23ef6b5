"""Backup and restore in the normative newline-delimited export format.

Layout of an export directory:

* ``store.runlogexport`` — UTF-8 text; line 1 is the header
  ``runlogexport v1``, then one record per line as
  ``<KIND>\\t<canonical JSON>`` with kinds in section order FILL, RUN,
  PASS, LOG, TEMPLATE, ATTACHMENT_META, AUDIT. Canonical JSON has keys
  sorted lexicographically and no insignificant whitespace.
* one sibling file per attachment blob, named exactly by its 64-hex digest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from runlog.canonical import canonical_json, sha256_hex
from runlog.domain import LhcFill, LogEntry, ReconstructionPass, RefKind, Run, Template
from runlog.errors import Conflict, Invalid, ParseError
from runlog.store.records import AuditRecord

HEADER = "runlogexport v1"
EXPORT_FILENAME = "store.runlogexport"

_SECTIONS = ("FILL", "RUN", "PASS", "LOG", "TEMPLATE", "ATTACHMENT_META", "AUDIT")
_SECTION_RANK = {kind: rank for rank, kind in enumerate(_SECTIONS)}


@dataclass(frozen=True)
class ExportSummary:
    path: str
    records: dict
    blobs: int


@dataclass(frozen=True)
class ImportSummary:
    records: dict
    blobs: int


def export_store(store, destination: str | Path) -> ExportSummary:
    """Write the whole store, blobs included, into a directory."""
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    lines = [HEADER]
    counts = {kind: 0 for kind in _SECTIONS}

    def emit(kind: str, record: dict) -> None:
        lines.append(f"{kind}\t{canonical_json(record)}")
        counts[kind] += 1

    # One consistent snapshot: the store lock serializes with writers.
    with store._lock:
        for fill in store.all_fills():
            emit("FILL", fill.to_dict())
        for run in store.all_runs():
            emit("RUN", run.to_dict())
        for rec_pass in store.all_passes():
            emit("PASS", rec_pass.to_dict())
        for log in store.all_logs():
            emit("LOG", log.to_dict())
        for template_id, template in store.all_templates():
            emit("TEMPLATE", {"template_id": template_id, **template.to_dict()})
        for meta in store.all_attachment_meta():
            emit("ATTACHMENT_META", meta.to_dict())
        for record, payload in store.all_audit():
            emit("AUDIT", {**record.to_dict(), "payload": payload})
        blob_rows = store._conn.execute("SELECT digest, content FROM blobs").fetchall()

    export_path = dest / EXPORT_FILENAME
    export_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    for digest, content in blob_rows:
        (dest / digest).write_bytes(content)
    return ExportSummary(path=str(export_path), records=counts, blobs=len(blob_rows))


def import_store(store, source: str | Path) -> ImportSummary:
    """Restore an export into an empty store, validating as it reads.

    Any malformed line, out-of-order section, dangling reference or
    corrupt blob aborts the import with ParseError naming the line; the
    whole import is one transaction, so a failure leaves the store empty.
    """
    src = Path(source)
    export_path = src / EXPORT_FILENAME if src.is_dir() else src
    if not export_path.exists():
        raise ParseError(0, f"export file {export_path} does not exist")

    counts = dict.fromkeys(_SECTIONS, 0)
    blobs_seen: set[str] = set()
    with store._lock:
        if any(store.counts().values()):
            raise Conflict("import requires an empty store")
        store._conn.execute("BEGIN IMMEDIATE")
        try:
            _import_lines(store, export_path, src if src.is_dir() else export_path.parent,
                          counts, blobs_seen)
            store._conn.execute("COMMIT")
        except BaseException:
            store._conn.execute("ROLLBACK")
            raise
    return ImportSummary(records=counts, blobs=len(blobs_seen))


def _import_lines(store, export_path: Path, blob_dir: Path, counts, blobs_seen) -> None:
    conn = store._conn
    fills: set[int] = set()
    runs: set[int] = set()
    passes: set[int] = set()
    last_rank = -1

    with export_path.open(encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if line_number == 1:
                if line != HEADER:
                    raise ParseError(line_number, f"bad header {line!r}, expected {HEADER!r}")
                continue
            if not line:
                raise ParseError(line_number, "blank line")
            kind, sep, payload = line.partition("\t")
            if not sep or kind not in _SECTION_RANK:
                raise ParseError(line_number, f"unknown record kind {kind!r}")
            rank = _SECTION_RANK[kind]
            if rank < last_rank:
                raise ParseError(line_number, f"{kind} record out of section order")
            last_rank = rank
            try:
                data = json.loads(payload)
            except json.JSONDecodeError as exc:
                raise ParseError(line_number, f"bad JSON: {exc}") from None
            try:
                _import_record(conn, blob_dir, kind, data, fills, runs, passes, blobs_seen)
            except (Invalid, KeyError, TypeError, ValueError) as exc:
                raise ParseError(line_number, str(exc)) from None
            counts[kind] += 1


def _import_record(conn, blob_dir, kind, data, fills, runs, passes, blobs_seen) -> None:
    if kind == "FILL":
        fill = LhcFill.from_dict(data)
        conn.execute(
            "INSERT INTO fills (fill_number, body) VALUES (?, ?)",
            (fill.fill_number, canonical_json(fill.to_dict())),
        )
        fills.add(fill.fill_number)
    elif kind == "RUN":
        run = Run.from_dict(data)
        if run.fill_number is not None and run.fill_number not in fills:
            raise Invalid(f"run {run.run_number} references missing fill {run.fill_number}")
        conn.execute(
            "INSERT INTO runs (run_number, body) VALUES (?, ?)",
            (run.run_number, canonical_json(run.to_dict())),
        )
        runs.add(run.run_number)
    elif kind == "PASS":
        rec_pass = ReconstructionPass.from_dict(data)
        pool = runs if rec_pass.input.kind is RefKind.RUN else passes
        if rec_pass.input.id not in pool:
            raise Invalid(
                f"pass {rec_pass.pass_id} references missing "
                f"{rec_pass.input.kind.value} {rec_pass.input.id}"
            )
        conn.execute(
            "INSERT INTO passes (pass_id, body) VALUES (?, ?)",
            (rec_pass.pass_id, canonical_json(rec_pass.to_dict())),
        )
        passes.add(rec_pass.pass_id)
    elif kind == "LOG":
        log = LogEntry.from_dict(data)
        for ref in log.associations:
            pool = {RefKind.RUN: runs, RefKind.FILL: fills, RefKind.PASS: passes}[ref.kind]
            if ref.id not in pool:
                raise Invalid(f"log {log.log_id} references missing {ref.kind.value} {ref.id}")
        for attachment in log.attachments:
            _require_blob(conn, blob_dir, attachment.digest, blobs_seen)
        conn.execute(
            "INSERT INTO logs (log_id, body) VALUES (?, ?)",
            (log.log_id, canonical_json(log.to_dict())),
        )
    elif kind == "TEMPLATE":
        template_id = int(data["template_id"])
        template = Template.from_dict({k: v for k, v in data.items() if k != "template_id"})
        conn.execute(
            "INSERT INTO templates (template_id, template_name, body) VALUES (?, ?, ?)",
            (template_id, template.template_name, canonical_json(template.to_dict())),
        )
    elif kind == "ATTACHMENT_META":
        from runlog.domain import Attachment

        meta = Attachment.from_dict(data)
        _require_blob(conn, blob_dir, meta.digest, blobs_seen)
        conn.execute(
            "INSERT OR REPLACE INTO attachment_meta (digest, body) VALUES (?, ?)",
            (meta.digest, canonical_json(meta.to_dict())),
        )
    elif kind == "AUDIT":
        payload = data.pop("payload", None)
        record = AuditRecord.from_dict(data)
        conn.execute(
            "INSERT INTO audit (seq, body, payload) VALUES (?, ?, ?)",
            (record.seq, canonical_json(record.to_dict()), payload),
        )
    else:  # pragma: no cover - guarded by _SECTION_RANK membership
        raise Invalid(f"unhandled kind {kind}")


def _require_blob(conn, blob_dir: Path, digest: str, blobs_seen: set[str]) -> None:
    if digest in blobs_seen:
        return
    blob_path = blob_dir / digest
    if not blob_path.exists():
        raise Invalid(f"blob file {digest} is missing")
    content = blob_path.read_bytes()
    if sha256_hex(content) != digest:
        raise Invalid(f"blob file {digest} content does not match its digest")
    conn.execute(
        "INSERT OR IGNORE INTO blobs (digest, content) VALUES (?, ?)", (digest, content)
    )
    blobs_seen.add(digest)

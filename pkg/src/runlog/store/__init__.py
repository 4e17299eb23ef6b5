"""Durable repository with audited mutations, content-addressed blobs
and the normative export/import format."""

from runlog.store.export import (
    EXPORT_FILENAME,
    HEADER,
    ExportSummary,
    ImportSummary,
    export_store,
    import_store,
)
from runlog.store.records import AuditAction, AuditRecord, AuditReport, Page
from runlog.store.store import (
    CRASH_AFTER_COMMIT,
    CRASH_BEFORE_AUDIT,
    CRASH_BEFORE_COMMIT,
    DEFAULT_MAX_ATTACHMENT_BYTES,
    DEFAULT_PAGE_LIMIT,
    MAX_PAGE_LIMIT,
    Store,
)

__all__ = [
    "AuditAction",
    "AuditRecord",
    "AuditReport",
    "CRASH_AFTER_COMMIT",
    "CRASH_BEFORE_AUDIT",
    "CRASH_BEFORE_COMMIT",
    "DEFAULT_MAX_ATTACHMENT_BYTES",
    "DEFAULT_PAGE_LIMIT",
    "EXPORT_FILENAME",
    "ExportSummary",
    "HEADER",
    "ImportSummary",
    "MAX_PAGE_LIMIT",
    "Page",
    "Store",
    "export_store",
    "import_store",
]

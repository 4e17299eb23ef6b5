"""Canonical serialization primitives: UTC millisecond timestamps,
sorted-key JSON and SHA-256 content digests.

Every digest and every export line in the system is derived from these
helpers, so their behaviour is load-bearing: keys sorted lexicographically,
no insignificant whitespace, timestamps always ``YYYY-MM-DDTHH:MM:SS.mmmZ``.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone

from runlog.errors import Invalid


def utc_now() -> datetime:
    """Current UTC time clamped to millisecond precision."""
    return clamp_ms(datetime.now(timezone.utc))


def clamp_ms(dt: datetime) -> datetime:
    """Normalize a timestamp to timezone-aware UTC with millisecond precision."""
    if dt.tzinfo is None:
        raise Invalid("timestamps must be timezone-aware")
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def format_ts(dt: datetime) -> str:
    """Render a UTC timestamp as ``2021-01-01T00:00:00.000Z``."""
    dt = clamp_ms(dt)
    return f"{dt.strftime('%Y-%m-%dT%H:%M:%S')}.{dt.microsecond // 1000:03d}Z"


def parse_ts(raw: str) -> datetime:
    """Parse an RFC 3339 timestamp; naive inputs are rejected."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError as exc:
        raise Invalid(f"bad timestamp {raw!r}: {exc}") from None
    return clamp_ms(dt)


def canonical_json(value: object) -> str:
    """Serialize to the canonical JSON text used for digests and exports."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def payload_digest(payload: object) -> str:
    """Digest of a mutation payload: SHA-256 over its canonical JSON."""
    return sha256_hex(canonical_json(payload).encode("utf-8"))

"""Audit records and pagination containers."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Generic, Mapping, TypeVar

from runlog.canonical import clamp_ms, format_ts, parse_ts
from runlog.domain.models import ActorRef, EntityRef
from runlog.errors import Invalid

T = TypeVar("T")


class AuditAction(str, Enum):
    CREATE_FILL = "CREATE_FILL"
    CREATE_RUN = "CREATE_RUN"
    END_RUN = "END_RUN"
    SET_QUALITY = "SET_QUALITY"
    TAG_RUN = "TAG_RUN"
    UNTAG_RUN = "UNTAG_RUN"
    CREATE_PASS = "CREATE_PASS"
    SET_PASS_STATUS = "SET_PASS_STATUS"
    CREATE_LOG = "CREATE_LOG"
    EDIT_LOG = "EDIT_LOG"
    ATTACH = "ATTACH"
    CREATE_TEMPLATE = "CREATE_TEMPLATE"


@dataclass(frozen=True)
class AuditRecord:
    """Immutable trace of one successful mutating operation."""

    seq: int
    timestamp: datetime
    actor: ActorRef
    action: AuditAction
    target: EntityRef
    payload_digest: str

    def __post_init__(self):
        if self.seq <= 0:
            raise Invalid("audit seq must be positive")
        if not isinstance(self.action, AuditAction):
            object.__setattr__(self, "action", AuditAction(self.action))
        object.__setattr__(self, "timestamp", clamp_ms(self.timestamp))

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "timestamp": format_ts(self.timestamp),
            "actor": self.actor.to_dict(),
            "action": self.action.value,
            "target": self.target.to_dict(),
            "payload_digest": self.payload_digest,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AuditRecord":
        return cls(
            seq=int(data["seq"]),
            timestamp=parse_ts(data["timestamp"]),
            actor=ActorRef.from_dict(data["actor"]),
            action=AuditAction(data["action"]),
            target=EntityRef.from_dict(data["target"]),
            payload_digest=data["payload_digest"],
        )


@dataclass(frozen=True)
class AuditReport:
    """Outcome of an audit-log verification sweep."""

    contiguous: bool
    count: int
    first_gap: int | None = None
    digest_failures: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return self.contiguous and not self.digest_failures

    def to_dict(self) -> dict[str, Any]:
        return {
            "contiguous": self.contiguous,
            "count": self.count,
            "first_gap": self.first_gap,
            "digest_failures": list(self.digest_failures),
        }


@dataclass(frozen=True)
class Page(Generic[T]):
    """One slice of a listing plus the full match count."""

    items: tuple[T, ...]
    total: int
    offset: int
    limit: int

    def __post_init__(self):
        if self.offset < 0 or self.limit <= 0:
            raise Invalid("page offset must be >= 0 and limit positive")
        if len(self.items) > self.limit:
            raise Invalid("page holds more items than its limit")
        if len(self.items) > max(self.total - self.offset, 0):
            raise Invalid("page holds more items than the slice allows")

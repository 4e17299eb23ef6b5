"""Service configuration: one YAML file plus environment overrides.

Recognized keys: ``listen`` (host:port), ``store`` (database path),
``max_upload_bytes``, ``ui_dir`` (static assets served under /ui) and
``tokens`` (list of {token, actor_id, role}). Environment variables
``RUNLOG_CONFIG``, ``RUNLOG_LISTEN`` and ``RUNLOG_STORE`` override the
file location, listen address and store path respectively.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from runlog.domain import ActorRef, ActorRole
from runlog.errors import Invalid
from runlog.store import DEFAULT_MAX_ATTACHMENT_BYTES

ENV_CONFIG = "RUNLOG_CONFIG"
ENV_LISTEN = "RUNLOG_LISTEN"
ENV_STORE = "RUNLOG_STORE"


@dataclass(frozen=True)
class TokenEntry:
    token: str
    actor: ActorRef


@dataclass(frozen=True)
class ServiceConfig:
    listen: str = "127.0.0.1:8177"
    store_path: str = "runlog.db"
    max_upload_bytes: int = DEFAULT_MAX_ATTACHMENT_BYTES
    tokens: tuple[TokenEntry, ...] = field(default_factory=tuple)
    ui_dir: str | None = None

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        try:
            return int(self.listen.rsplit(":", 1)[1])
        except (IndexError, ValueError):
            raise Invalid(f"listen address {self.listen!r} must be host:port") from None

    def token_table(self) -> dict[str, ActorRef]:
        return {entry.token: entry.actor for entry in self.tokens}


def load_config(
    path: str | Path | None = None, env: Mapping[str, str] | None = None
) -> ServiceConfig:
    env = os.environ if env is None else env
    config_path = path or env.get(ENV_CONFIG)
    raw: dict = {}
    if config_path:
        text = Path(config_path).read_text(encoding="utf-8")
        loaded = yaml.safe_load(text) or {}
        if not isinstance(loaded, dict):
            raise Invalid(f"config file {config_path} must hold a mapping")
        raw = loaded

    tokens = []
    for entry in raw.get("tokens") or ():
        try:
            tokens.append(
                TokenEntry(
                    token=str(entry["token"]),
                    actor=ActorRef(actor_id=str(entry["actor_id"]), role=ActorRole(entry["role"])),
                )
            )
        except (KeyError, ValueError) as exc:
            raise Invalid(f"bad token entry {entry!r}: {exc}") from None

    return ServiceConfig(
        listen=env.get(ENV_LISTEN) or raw.get("listen") or ServiceConfig.listen,
        store_path=env.get(ENV_STORE) or raw.get("store") or ServiceConfig.store_path,
        max_upload_bytes=int(raw.get("max_upload_bytes") or DEFAULT_MAX_ATTACHMENT_BYTES),
        tokens=tuple(tokens),
        ui_dir=raw.get("ui_dir"),
    )

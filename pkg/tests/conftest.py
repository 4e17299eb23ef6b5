from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest
from fastapi.testclient import TestClient

from runlog.domain import ActorRef, ActorRole
from runlog.service import ServiceConfig, create_app
from runlog.service.config import TokenEntry
from runlog.store import Store

SHIFTER_TOKEN = "tok-shifter"
MACHINE_TOKEN = "tok-machine"

T0 = datetime(2022, 3, 1, 8, 0, tzinfo=timezone.utc)


def ts(minutes: float = 0.0) -> datetime:
    return T0 + timedelta(minutes=minutes)


@pytest.fixture
def actor() -> ActorRef:
    return ActorRef("alice", ActorRole.SHIFTER)


@pytest.fixture
def store() -> Store:
    s = Store(":memory:")
    yield s
    s.close()


@pytest.fixture
def service_config() -> ServiceConfig:
    return ServiceConfig(
        tokens=(
            TokenEntry(SHIFTER_TOKEN, ActorRef("alice", ActorRole.SHIFTER)),
            TokenEntry(MACHINE_TOKEN, ActorRef("daq", ActorRole.MACHINE)),
        )
    )


@pytest.fixture
def app(service_config, store):
    return create_app(service_config, store=store)


@pytest.fixture
def client(app) -> TestClient:
    with TestClient(app) as c:
        c.headers.update({"Authorization": f"Bearer {SHIFTER_TOKEN}"})
        yield c


@pytest.fixture
def anon_client(app) -> TestClient:
    with TestClient(app) as c:
        yield c

"""HTTP surface: auth, endpoint semantics, envelopes, self-description."""

from __future__ import annotations

import io
import json

import pytest

from runlog.service.app import API_PREFIX
from tests.conftest import MACHINE_TOKEN, SHIFTER_TOKEN


def make_fill(client, number=7, **extra):
    body = {"fill_number": number, "beam_type": "Pb-Pb", **extra}
    response = client.post(f"{API_PREFIX}/fills", json=body)
    assert response.status_code == 201, response.text
    return response.json()


def make_run(client, **extra):
    body = {"run_type": "GLOBAL", "start_time": "2022-03-01T08:00:00Z", **extra}
    response = client.post(f"{API_PREFIX}/runs", json=body)
    assert response.status_code == 201, response.text
    return response.json()


def audit_count(client) -> int:
    return client.get(f"{API_PREFIX}/audit", params={"since": 0, "limit": 1}).json()["total"]


# -- auth -----------------------------------------------------------------------


def test_health_and_openapi_are_public(anon_client):
    assert anon_client.get(f"{API_PREFIX}/health").status_code == 200
    assert anon_client.get(f"{API_PREFIX}/openapi").status_code == 200


def test_missing_token_is_401_envelope(anon_client):
    response = anon_client.get(f"{API_PREFIX}/runs")
    assert response.status_code == 401
    body = response.json()
    assert body["code"] == "UNAUTHORIZED" and "message" in body


def test_unknown_token_is_401_everywhere_and_mutates_nothing(client, anon_client):
    before = audit_count(client)
    bad = {"Authorization": "Bearer wrong"}
    for method, path, kwargs in [
        ("GET", f"{API_PREFIX}/runs", {}),
        ("POST", f"{API_PREFIX}/fills", {"json": {"fill_number": 1, "beam_type": "x"}}),
        ("POST", f"{API_PREFIX}/runs", {"json": {"run_type": "GLOBAL"}}),
        ("POST", f"{API_PREFIX}/templates", {"json": {
            "template_name": "t", "title_pattern": "x", "body_pattern": "y"}}),
        ("GET", f"{API_PREFIX}/reports/overview", {}),
    ]:
        response = anon_client.request(method, path, headers=bad, **kwargs)
        assert response.status_code == 401, (method, path)
        assert response.json()["code"] == "UNAUTHORIZED"
    assert audit_count(client) == before


# -- fills -----------------------------------------------------------------------


def test_fill_with_runs_counts(client):
    make_fill(client, 7)
    for _ in range(3):
        make_run(client, fill_number=7)
    make_run(client)  # no fill
    response = client.get(f"{API_PREFIX}/fills/7/runs")
    assert response.status_code == 200
    assert response.json()["total"] == 3


def test_get_absent_fill_is_404_envelope(client):
    response = client.get(f"{API_PREFIX}/fills/999")
    assert response.status_code == 404
    assert response.json()["code"] == "NOT_FOUND"


def test_duplicate_fill_is_409(client):
    make_fill(client, 7)
    response = client.post(f"{API_PREFIX}/fills", json={"fill_number": 7, "beam_type": "p-p"})
    assert response.status_code == 409
    assert response.json()["code"] == "CONFLICT"


def test_fill_listing_newest_first(client):
    for number in (3, 5, 9):
        make_fill(client, number)
    items = client.get(f"{API_PREFIX}/fills").json()["items"]
    assert [f["fill_number"] for f in items] == [9, 5, 3]


# -- runs ------------------------------------------------------------------------


def test_start_run_allocates_number(client):
    first = make_run(client)
    second = make_run(client)
    assert second["run_number"] == first["run_number"] + 1
    assert first["state"] == "ONGOING"
    assert first["data_set_id"] == f"run-{first['run_number']}"


def test_run_with_unknown_fill_is_404(client):
    response = client.post(f"{API_PREFIX}/runs", json={"run_type": "GLOBAL", "fill_number": 42})
    assert response.status_code == 404


def test_patch_end_twice_second_is_409(client):
    run = make_run(client)
    path = f"{API_PREFIX}/runs/{run['run_number']}"
    first = client.patch(path, json={"end": {"end_time": "2022-03-01T09:00:00Z"}})
    assert first.status_code == 200
    assert first.json()["state"] == "ENDED"
    second = client.patch(path, json={"end": {"end_time": "2022-03-01T10:00:00Z"}})
    assert second.status_code == 409
    assert second.json()["code"] == "CONFLICT"


def test_patch_needs_exactly_one_event(client):
    run = make_run(client)
    path = f"{API_PREFIX}/runs/{run['run_number']}"
    both = client.patch(path, json={"end": {}, "quality": "GOOD"})
    neither = client.patch(path, json={})
    assert both.status_code == 400 and neither.status_code == 400
    assert both.json()["code"] == "INVALID"


def test_tag_then_untag(client):
    run = make_run(client)
    number = run["run_number"]
    tagged = client.post(f"{API_PREFIX}/runs/{number}/tags", json={"tag": " TPC"})
    assert tagged.status_code == 200 and tagged.json()["tags"] == ["tpc"]
    removed = client.delete(f"{API_PREFIX}/runs/{number}/tags/tpc")
    assert removed.status_code == 200 and removed.json()["tags"] == []
    missing = client.delete(f"{API_PREFIX}/runs/{number}/tags/tpc")
    assert missing.status_code == 404


def test_run_query_params_round_trip(client):
    make_fill(client, 1)
    make_run(client, fill_number=1, tags=["cosmics", "tpc"], run_type="COSMICS")
    make_run(client, tags=["tpc"])
    response = client.get(
        f"{API_PREFIX}/runs",
        params={
            "tags": "cosmics",
            "type": "COSMICS",
            "from": "2022-03-01T00:00:00Z",
            "to": "2022-03-02T00:00:00Z",
        },
    )
    assert response.status_code == 200
    page = response.json()
    assert page["total"] == 1
    assert page["items"][0]["tags"] == ["cosmics", "tpc"]


def test_bad_query_values_are_400(client):
    assert client.get(f"{API_PREFIX}/runs", params={"type": "NOPE"}).status_code == 400
    assert client.get(f"{API_PREFIX}/runs", params={"from": "not-a-time"}).status_code == 400
    assert client.get(f"{API_PREFIX}/runs", params={"limit": 0}).status_code == 400
    assert client.get(f"{API_PREFIX}/runs", params={"limit": 1001}).status_code == 400
    reversed_range = client.get(
        f"{API_PREFIX}/runs",
        params={"from": "2022-03-02T00:00:00Z", "to": "2022-03-01T00:00:00Z"},
    )
    assert reversed_range.status_code == 400
    assert reversed_range.json()["code"] == "INVALID"


# -- passes ------------------------------------------------------------------------


def test_pass_chain_and_lineage(client):
    make_fill(client, 1)
    run = make_run(client, fill_number=1)
    first = client.post(f"{API_PREFIX}/passes", json={
        "name": "apass1", "input": {"kind": "RUN", "id": run["run_number"]}}).json()
    second = client.post(f"{API_PREFIX}/passes", json={
        "name": "apass2", "input": {"kind": "PASS", "id": first["pass_id"]}}).json()
    third = client.post(f"{API_PREFIX}/passes", json={
        "name": "apass3", "input": {"kind": "PASS", "id": second["pass_id"]}}).json()

    lineage = client.get(f"{API_PREFIX}/passes/{third['pass_id']}/lineage").json()
    assert len(lineage["chain"]) == 4
    assert lineage["chain"][-1] == {"kind": "RUN", "id": run["run_number"]}


def test_pass_with_fill_input_is_422(client):
    make_fill(client, 1)
    response = client.post(f"{API_PREFIX}/passes", json={
        "name": "apass1", "input": {"kind": "FILL", "id": 1}})
    assert response.status_code == 422
    assert response.json()["code"] == "INVALID"


def test_pass_with_missing_input_is_404(client):
    response = client.post(f"{API_PREFIX}/passes", json={
        "name": "apass1", "input": {"kind": "RUN", "id": 333}})
    assert response.status_code == 404


def test_pass_status_patch(client):
    run = make_run(client)
    rec = client.post(f"{API_PREFIX}/passes", json={
        "name": "apass1", "input": {"kind": "RUN", "id": run["run_number"]}}).json()
    assert rec["status"] == "PENDING"
    running = client.patch(f"{API_PREFIX}/passes/{rec['pass_id']}", json={"status": "RUNNING"})
    assert running.status_code == 200 and running.json()["status"] == "RUNNING"
    done = client.patch(f"{API_PREFIX}/passes/{rec['pass_id']}", json={"status": "DONE"})
    assert done.status_code == 200 and done.json()["status"] == "DONE"


# -- logs --------------------------------------------------------------------------


def make_template(client):
    response = client.post(f"{API_PREFIX}/templates", json={
        "template_name": "eos",
        "title_pattern": "EOS report {{shift}}",
        "body_pattern": "Detector {{detector}}: {{notes}}",
        "required_fields": ["shift", "detector"],
        "default_tags": ["eos"],
    })
    assert response.status_code == 201, response.text
    return response.json()


def test_template_missing_required_field_names_it(client):
    make_template(client)
    response = client.post(f"{API_PREFIX}/logs", json={
        "template_name": "eos", "values": {"shift": "night"}})
    assert response.status_code == 400
    body = response.json()
    assert body["code"] == "INVALID"
    assert body["detail"]["field"] == "detector"


def test_template_log_renders_and_merges_tags(client):
    make_template(client)
    run = make_run(client)
    response = client.post(f"{API_PREFIX}/logs", json={
        "template_name": "eos",
        "values": {"shift": "night", "detector": "tpc"},
        "associations": [{"kind": "RUN", "id": run["run_number"]}],
        "tags": ["urgent"],
    })
    assert response.status_code == 201
    entry = response.json()
    assert entry["title"] == "EOS report night"
    assert entry["body"] == "Detector tpc: "
    assert entry["tags"] == ["eos", "urgent"]
    assert entry["associations"] == [{"kind": "RUN", "id": run["run_number"]}]


def test_unknown_template_is_404(client):
    response = client.post(f"{API_PREFIX}/logs", json={"template_name": "ghost", "values": {}})
    assert response.status_code == 404


def test_duplicate_template_is_409(client):
    make_template(client)
    response = client.post(f"{API_PREFIX}/templates", json={
        "template_name": "eos", "title_pattern": "x", "body_pattern": "y"})
    assert response.status_code == 409


def test_log_requires_exactly_one_content_source(client):
    both = client.post(f"{API_PREFIX}/logs", json={
        "title": "t", "template_name": "eos", "values": {}})
    neither = client.post(f"{API_PREFIX}/logs", json={"body": "b"})
    assert both.status_code == 400 and neither.status_code == 400


def test_machine_token_writes_process_origin(client, anon_client):
    human = client.post(f"{API_PREFIX}/logs", json={"title": "by hand", "body": ""}).json()
    machine = anon_client.post(
        f"{API_PREFIX}/logs",
        headers={"Authorization": f"Bearer {MACHINE_TOKEN}"},
        json={"title": "by daq", "body": ""},
    ).json()
    assert human["origin"] == "HUMAN" and human["author"]["actor_id"] == "alice"
    assert machine["origin"] == "PROCESS" and machine["author"]["role"] == "MACHINE"


def test_edit_log_creates_revisions(client):
    entry = client.post(f"{API_PREFIX}/logs", json={"title": "v0", "body": "b0"}).json()
    edited = client.patch(f"{API_PREFIX}/logs/{entry['log_id']}", json={"title": "v1"})
    assert edited.status_code == 200
    assert edited.json()["revision_count"] == 2
    revisions = client.get(f"{API_PREFIX}/logs/{entry['log_id']}/revisions").json()
    assert [r["revision_index"] for r in revisions] == [0, 1]
    assert revisions[0]["title"] == "v0" and revisions[1]["title"] == "v1"
    assert revisions[0]["body"] == "b0" and revisions[1]["body"] == "b0"


def test_log_association_must_exist(client):
    response = client.post(f"{API_PREFIX}/logs", json={
        "title": "t", "associations": [{"kind": "RUN", "id": 5}]})
    assert response.status_code == 404


def test_log_text_search(client):
    client.post(f"{API_PREFIX}/logs", json={"title": "EOS report", "body": "tpc ok"})
    client.post(f"{API_PREFIX}/logs", json={"title": "noise study", "body": "emcal"})
    page = client.get(f"{API_PREFIX}/logs", params={"text": "eos tpc"}).json()
    assert page["total"] == 1
    assert page["items"][0]["title"] == "EOS report"


def test_attachment_upload_round_trip(client):
    entry = client.post(f"{API_PREFIX}/logs", json={"title": "t", "body": ""}).json()
    payload = b"\x00\x01binary bytes\xff"
    upload = client.post(
        f"{API_PREFIX}/logs/{entry['log_id']}/attachments",
        files={"file": ("trace.bin", io.BytesIO(payload), "application/octet-stream")},
    )
    assert upload.status_code == 201
    digest = upload.json()["digest"]
    download = client.get(f"{API_PREFIX}/attachments/{digest}")
    assert download.status_code == 200
    assert download.content == payload
    assert download.headers["content-type"].startswith("application/octet-stream")
    assert client.get(f"{API_PREFIX}/logs/{entry['log_id']}").json()["attachments"][0]["digest"] == digest


def test_attachment_too_large_is_413(service_config, store):
    from dataclasses import replace

    from fastapi.testclient import TestClient

    from runlog.service import create_app

    config = replace(service_config, max_upload_bytes=10)
    app = create_app(config, store=store)
    with TestClient(app) as client:
        client.headers.update({"Authorization": f"Bearer {SHIFTER_TOKEN}"})
        entry = client.post(f"{API_PREFIX}/logs", json={"title": "t", "body": ""}).json()
        response = client.post(
            f"{API_PREFIX}/logs/{entry['log_id']}/attachments",
            files={"file": ("big.bin", io.BytesIO(b"x" * 11), "application/octet-stream")},
        )
        assert response.status_code == 413
        assert response.json()["code"] == "TOO_LARGE"


def test_unknown_attachment_digest_is_404(client):
    assert client.get(f"{API_PREFIX}/attachments/{'0' * 64}").status_code == 404


# -- audit and reports over HTTP -------------------------------------------------------


def test_audit_counts_mutations_exactly(client):
    start = audit_count(client)
    make_fill(client, 1)
    run = make_run(client, fill_number=1)
    client.patch(f"{API_PREFIX}/runs/{run['run_number']}", json={"quality": "GOOD"})
    client.post(f"{API_PREFIX}/runs/999/tags", json={"tag": "x"})  # fails, no audit
    assert audit_count(client) == start + 3
    page = client.get(f"{API_PREFIX}/audit", params={"since": start, "limit": 10}).json()
    assert [r["action"] for r in page["items"]] == ["CREATE_FILL", "CREATE_RUN", "SET_QUALITY"]
    assert all(len(r["payload_digest"]) == 64 for r in page["items"])


def test_get_endpoints_do_not_mutate(client):
    make_fill(client, 1)
    make_run(client, fill_number=1)
    before = audit_count(client)
    for path in ("/runs", "/fills", "/passes", "/logs", "/templates",
                 "/reports/overview", "/reports/runs-per-fill", "/health",
                 "/runs/1", "/fills/1", "/fills/1/runs", "/openapi"):
        client.get(f"{API_PREFIX}{path}")
    assert audit_count(client) == before


def test_reports_endpoints_json_and_csv(client):
    make_fill(client, 7)
    run = make_run(client, fill_number=7)
    client.patch(f"{API_PREFIX}/runs/{run['run_number']}",
                 json={"end": {"end_time": "2022-03-01T08:05:00Z"}})

    overview = client.get(f"{API_PREFIX}/reports/overview").json()
    assert overview["run_count"] == 1
    assert overview["mean_runs_per_fill"] == 1.0
    assert overview["duration_histogram"]["<10m"] == 1

    per_fill = client.get(f"{API_PREFIX}/reports/runs-per-fill").json()
    assert per_fill == [{"fill_number": 7, "run_count": 1}]

    csv_text = client.get(f"{API_PREFIX}/reports/overview", params={"format": "csv"})
    assert csv_text.headers["content-type"].startswith("text/csv")
    assert csv_text.text.splitlines()[0] == "key,value"
    csv_rows = client.get(f"{API_PREFIX}/reports/runs-per-fill", params={"format": "csv"})
    assert csv_rows.text.splitlines() == ["fill_number,run_count", "7,1"]

    reversed_window = client.get(f"{API_PREFIX}/reports/overview", params={
        "from": "2022-03-02T00:00:00Z", "to": "2022-03-01T00:00:00Z"})
    assert reversed_window.status_code == 400


# -- pagination coherence ----------------------------------------------------------------


def test_paging_concatenation_yields_each_entity_once(client):
    make_fill(client, 1)
    for index in range(23):
        make_run(client, fill_number=1 if index % 2 == 0 else None)
    seen: list[int] = []
    offset = 0
    while True:
        page = client.get(f"{API_PREFIX}/runs", params={"offset": offset, "limit": 5}).json()
        seen.extend(item["run_number"] for item in page["items"])
        offset += 5
        if offset >= page["total"]:
            break
    assert len(seen) == 23
    assert sorted(seen, reverse=True) == seen
    assert len(set(seen)) == 23


# -- self-description ----------------------------------------------------------------------


def test_openapi_path_set_equals_live_routes(app, client):
    from runlog.service import api_route_paths

    doc = client.get(f"{API_PREFIX}/openapi").json()
    served = api_route_paths(app)
    assert served, "route table introspection found nothing"
    assert set(doc["paths"]) == served


def test_openapi_advertises_error_envelope_for_4xx(client):
    doc = client.get(f"{API_PREFIX}/openapi").json()
    assert "ErrorEnvelope" in doc["components"]["schemas"]
    envelope_ref = {"$ref": "#/components/schemas/ErrorEnvelope"}
    operation = doc["paths"][f"{API_PREFIX}/runs"]["post"]
    for status in ("400", "401", "404"):
        schema = operation["responses"][status]["content"]["application/json"]["schema"]
        assert schema == envelope_ref
    assert "HTTPValidationError" not in json.dumps(doc)


def test_openapi_document_is_stable_and_versioned(client):
    first = client.get(f"{API_PREFIX}/openapi").json()
    second = client.get(f"{API_PREFIX}/openapi").json()
    assert first == second
    assert first["openapi"].startswith("3.")
    assert first["info"]["title"] == "runlog"


def test_error_envelope_shape_is_uniform(client):
    responses = [
        client.get(f"{API_PREFIX}/runs/999"),
        client.post(f"{API_PREFIX}/fills", json={"beam_type": "x"}),
        client.get(f"{API_PREFIX}/nothing-here"),
        client.get(f"{API_PREFIX}/runs", params={"limit": "wat"}),
    ]
    for response in responses:
        assert response.status_code >= 400
        body = response.json()
        assert set(body) == {"code", "message", "detail"}
        assert body["code"] in {"INVALID", "NOT_FOUND", "CONFLICT",
                                "UNAUTHORIZED", "TOO_LARGE", "INTERNAL"}

"""Operator command line.

Thin mapping onto the service API and local store administration: every
subcommand performs exactly one documented call sequence. Exit codes:
0 success, 1 domain or transport error, 2 usage error. ``--output raw``
prints the service's response body verbatim for pipelines.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import httpx
import yaml

from runlog import __version__
from runlog.errors import RunlogError
from runlog.service.config import load_config
from runlog.store import Store, export_store, import_store

USER_CONFIG_PATH = Path.home() / ".config" / "runlog" / "config"
DEFAULT_ENDPOINT = "http://127.0.0.1:8177"


def build_client(endpoint: str, token: str | None) -> httpx.Client:
    """Create the API client; tests monkeypatch this to inject transports."""
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    return httpx.Client(base_url=endpoint, headers=headers, timeout=30.0)


def _user_defaults() -> dict:
    if not USER_CONFIG_PATH.exists():
        return {}
    loaded = yaml.safe_load(USER_CONFIG_PATH.read_text(encoding="utf-8")) or {}
    return loaded if isinstance(loaded, dict) else {}


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _api_call(endpoint, token, method, path, **kwargs) -> httpx.Response:
    try:
        with build_client(endpoint, token) as client:
            return client.request(method, path, **kwargs)
    except httpx.TransportError as exc:
        _fail(f"cannot reach {endpoint}: {exc}")


def _check(response: httpx.Response) -> httpx.Response:
    if response.status_code >= 300:
        try:
            envelope = response.json()
            message = f"{envelope.get('code')}: {envelope.get('message')}"
            if envelope.get("detail"):
                message += f" ({json.dumps(envelope['detail'])})"
        except ValueError:
            message = response.text
        _fail(f"HTTP {response.status_code} {message}")
    return response


def _emit(response: httpx.Response, output: str, table_fn=None) -> None:
    if output == "raw" or table_fn is None:
        click.echo(response.text)
        return
    table_fn(response.json())


def _common_options(fn):
    fn = click.option(
        "--endpoint",
        envvar="RUNLOG_ENDPOINT",
        default=None,
        help=f"Service base URL (default {DEFAULT_ENDPOINT})",
    )(fn)
    fn = click.option("--token", envvar="RUNLOG_TOKEN", default=None, help="Bearer token")(fn)
    fn = click.option(
        "--output",
        type=click.Choice(["table", "raw"]),
        default=None,
        help="table (human) or raw (verbatim response body)",
    )(fn)
    return fn


def _resolve(endpoint, token, output) -> tuple[str, str | None, str]:
    defaults = _user_defaults()
    return (
        endpoint or defaults.get("endpoint") or DEFAULT_ENDPOINT,
        token or defaults.get("token"),
        output or defaults.get("output") or "table",
    )


@click.group()
@click.version_option(version=__version__, prog_name="runlog")
def main():
    """Bookkeeping for accelerator data taking: catalogue, logbook, reports."""


# -- serve ---------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML config file (or RUNLOG_CONFIG)")
@click.option("--listen", default=None, help="host:port override")
@click.option("--store", "store_path", default=None, help="store path override")
def serve(config_path, listen, store_path):
    """Start the HTTP service."""
    import uvicorn

    from runlog.service import create_app

    config = load_config(config_path)
    if listen:
        config = replace(config, listen=listen)
    if store_path:
        config = replace(config, store_path=store_path)
    app = create_app(config)
    click.echo(f"serving on http://{config.listen} (store: {config.store_path})", err=True)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning", access_log=False)


# -- seed ----------------------------------------------------------------------


@main.command()
@click.option("--seed", "seed_value", type=int, default=42, show_default=True)
@click.option("--fills", type=int, required=True, help="number of fills to generate")
@click.option("--target", default=None, help="replay against this service URL")
@click.option("--store", "store_path", default=None, help="or write directly into this store")
@click.option("--token", envvar="RUNLOG_TOKEN", default=None, help="token for --target")
@click.option("--mean-runs-per-fill", type=float, default=56.0, show_default=True)
@click.option("--logs-per-run", type=float, default=0.7, show_default=True)
@click.option("--concurrency", type=int, default=4, show_default=True,
              help="parallel requests for --target replay")
def seed(seed_value, fills, target, store_path, token, mean_runs_per_fill, logs_per_run, concurrency):
    """Generate a deterministic corpus and replay it."""
    from runlog.simulator import ApiTarget, DirectTarget, SimConfig, generate, replay

    if (target is None) == (store_path is None):
        raise click.UsageError("provide exactly one of --target or --store")
    config = SimConfig(
        seed=seed_value,
        n_fills=fills,
        mean_runs_per_fill=mean_runs_per_fill,
        logs_per_run=logs_per_run,
    )
    dataset = generate(config)
    if target is not None:
        if token is None:
            raise click.UsageError("--target needs --token (or RUNLOG_TOKEN)")
        destination = ApiTarget(endpoint=target, token=token, concurrency=concurrency)
    else:
        destination = DirectTarget(Store(store_path))
    try:
        report = replay(dataset, destination)
    except RunlogError as exc:
        _fail(str(exc))
    click.echo(json.dumps({"dataset": dataset.counts(), "replay": report.to_dict()}, indent=2))
    if report.failures:
        sys.exit(1)


# -- runs ----------------------------------------------------------------------


@main.group()
def runs():
    """Run catalogue queries."""


@runs.command("list")
@click.option("--tag", "tags", multiple=True)
@click.option("--type", "run_type", default=None)
@click.option("--quality", default=None)
@click.option("--state", default=None)
@click.option("--fill", type=int, default=None)
@click.option("--from", "time_from", default=None, metavar="RFC3339")
@click.option("--to", "time_to", default=None, metavar="RFC3339")
@click.option("--limit", type=int, default=20, show_default=True)
@click.option("--offset", type=int, default=0)
@_common_options
def runs_list(tags, run_type, quality, state, fill, time_from, time_to, limit, offset,
              endpoint, token, output):
    """Query the run catalogue (newest first)."""
    endpoint, token, output = _resolve(endpoint, token, output)
    params = {"limit": limit, "offset": offset}
    if tags:
        params["tags"] = ",".join(tags)
    for key, value in (("type", run_type), ("quality", quality), ("state", state),
                       ("fill", fill), ("from", time_from), ("to", time_to)):
        if value is not None:
            params[key] = value
    response = _check(_api_call(endpoint, token, "GET", "/api/v1/runs", params=params))

    def table(page):
        click.echo(f"total {page['total']}  (showing {len(page['items'])})")
        header = f"{'RUN':>7}  {'TYPE':<20} {'STATE':<8} {'QUALITY':<8} {'FILL':>5}  {'START':<24} TAGS"
        click.echo(header)
        for item in page["items"]:
            fill_cell = item["fill_number"] if item["fill_number"] is not None else "-"
            click.echo(
                f"{item['run_number']:>7}  {item['run_type']:<20} {item['state']:<8} "
                f"{item['quality']:<8} {fill_cell:>5}  {item['start_time']:<24} "
                f"{','.join(item['tags'])}"
            )

    _emit(response, output, table)


# -- log -----------------------------------------------------------------------


@main.group()
def log():
    """Logbook entries."""


@log.command("new")
@click.option("--template", "template_name", default=None)
@click.option("--set", "values", multiple=True, metavar="KEY=VALUE",
              help="template field (repeatable)")
@click.option("--title", default=None)
@click.option("--body", default=None)
@click.option("--body-file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--attach", "attachments", multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--run", "run_refs", multiple=True, type=int)
@click.option("--fill", "fill_refs", multiple=True, type=int)
@click.option("--pass", "pass_refs", multiple=True, type=int)
@click.option("--tag", "tags", multiple=True)
@_common_options
def log_new(template_name, values, title, body, body_file, attachments,
            run_refs, fill_refs, pass_refs, tags, endpoint, token, output):
    """Create a log entry, optionally from a template, with attachments."""
    endpoint, token, output = _resolve(endpoint, token, output)
    if (template_name is None) == (title is None):
        raise click.UsageError("provide exactly one of --template or --title")
    if body is not None and body_file is not None:
        raise click.UsageError("provide --body or --body-file, not both")

    payload: dict = {
        "associations": (
            [{"kind": "RUN", "id": n} for n in run_refs]
            + [{"kind": "FILL", "id": n} for n in fill_refs]
            + [{"kind": "PASS", "id": n} for n in pass_refs]
        ),
        "tags": list(tags),
    }
    if template_name is not None:
        parsed = {}
        for pair in values:
            key, sep, value = pair.partition("=")
            if not sep:
                raise click.UsageError(f"--set needs KEY=VALUE, got {pair!r}")
            parsed[key] = value
        payload["template_name"] = template_name
        payload["values"] = parsed
    else:
        payload["title"] = title
        if body_file is not None:
            payload["body"] = Path(body_file).read_text(encoding="utf-8")
        else:
            payload["body"] = body or ""

    response = _check(_api_call(endpoint, token, "POST", "/api/v1/logs", json=payload))
    entry = response.json()
    for path in attachments:
        blob = Path(path).read_bytes()
        upload = _api_call(
            endpoint,
            token,
            "POST",
            f"/api/v1/logs/{entry['log_id']}/attachments",
            files={"file": (Path(path).name, blob)},
        )
        _check(upload)
    if output == "raw":
        refreshed = _check(
            _api_call(endpoint, token, "GET", f"/api/v1/logs/{entry['log_id']}")
        )
        click.echo(refreshed.text)
    else:
        click.echo(f"log {entry['log_id']} created: {entry['title']}")
        if attachments:
            click.echo(f"attached {len(attachments)} file(s)")


# -- store administration --------------------------------------------------------


@main.command()
@click.argument("directory", type=click.Path(file_okay=False))
@click.option("--store", "store_path", required=True, help="store database path")
def export(directory, store_path):
    """Write a full backup (records + blobs) into DIRECTORY."""
    store = Store(store_path)
    try:
        summary = export_store(store, directory)
    except RunlogError as exc:
        _fail(str(exc))
    finally:
        store.close()
    click.echo(json.dumps({"path": summary.path, "records": summary.records,
                           "blobs": summary.blobs}, indent=2))


@main.command("import")
@click.argument("directory", type=click.Path(exists=True))
@click.option("--store", "store_path", required=True, help="target store (must be empty)")
def import_(directory, store_path):
    """Restore a backup from DIRECTORY into an empty store."""
    store = Store(store_path)
    try:
        summary = import_store(store, directory)
    except RunlogError as exc:
        _fail(str(exc))
    finally:
        store.close()
    click.echo(json.dumps({"records": summary.records, "blobs": summary.blobs}, indent=2))


@main.group()
def audit():
    """Audit-log tooling."""


@audit.command()
@click.option("--store", "store_path", required=True, help="store database path")
def verify(store_path):
    """Check audit contiguity and payload digests; nonzero exit on failure."""
    store = Store(store_path)
    try:
        report = store.verify_audit()
        problems = store.verify_integrity()
    finally:
        store.close()
    click.echo(json.dumps({**report.to_dict(), "integrity_violations": problems}, indent=2))
    if not report.ok or problems:
        sys.exit(1)


if __name__ == "__main__":
    main()

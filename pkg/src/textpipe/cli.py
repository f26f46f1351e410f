"""Operator and power-user command line.

Service commands (`serve`, `token`, `reindex`) own the data directory; user
commands (`upload`, `submit`, `status`, `search`, `concordance`, `result`)
are thin REST clients and print the API's JSON verbatim. Configuration
precedence is flags, then TEXTPIPE_* environment variables, then defaults.

Exit codes: 0 success, 1 user error, 2 connectivity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import os
import signal
import sys
import time
import urllib.error
import urllib.request
from pathlib import Path
from typing import Any, Optional

from .api import DEFAULT_HTTP_ADDR, ApiServer
from .broker import DEFAULT_LISTEN
from .index import InvertedIndex, rebuild_from_store
from .nlp import default_registry
from .service import PlatformNode
from .store import DocumentStore
from .worker import DEFAULT_HEARTBEAT_INTERVAL, run_worker_loop

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER = 1
EXIT_CONN = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USER):
        super().__init__(message)
        self.code = code


# -- configuration ------------------------------------------------------------

def _env(name: str, default: Optional[str] = None) -> Optional[str]:
    return os.environ.get(name) or default


def _data_dir(args) -> Path:
    value = args.data_dir or _env("TEXTPIPE_DATA")
    if not value:
        raise CliError("data directory required (--data-dir or TEXTPIPE_DATA)")
    return Path(value)


def _api_base(args) -> str:
    addr = getattr(args, "api", None) or _env("TEXTPIPE_API") or DEFAULT_HTTP_ADDR
    if not addr.startswith("http"):
        addr = f"http://{addr}"
    return addr.rstrip("/")


def _token(args) -> str:
    token = getattr(args, "token", None) or _env("TEXTPIPE_TOKEN")
    if not token:
        raise CliError("API token required (--token or TEXTPIPE_TOKEN)")
    return token


# -- REST client --------------------------------------------------------------

def api_request_raw(
    args,
    method: str,
    path: str,
    body: Optional[bytes] = None,
    headers: Optional[dict] = None,
) -> tuple[int, bytes]:
    url = _api_base(args) + path
    request = urllib.request.Request(url, data=body, method=method)
    request.add_header("Authorization", f"Bearer {_token(args)}")
    for name, value in (headers or {}).items():
        request.add_header(name, value)
    try:
        with urllib.request.urlopen(request, timeout=60) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as err:
        return err.code, err.read()
    except (urllib.error.URLError, ConnectionError, TimeoutError) as err:
        raise CliError(f"cannot reach API at {url}: {err}", EXIT_CONN)


def api_request(
    args,
    method: str,
    path: str,
    body: Optional[bytes] = None,
    headers: Optional[dict] = None,
) -> tuple[int, Any]:
    status, raw = api_request_raw(args, method, path, body, headers)
    try:
        return status, json.loads(raw.decode("utf-8"))
    except ValueError:
        return status, {"error": "Internal", "detail": raw.decode("utf-8", "replace")}


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, ensure_ascii=False, indent=2))


def _expect(status: int, payload: Any, *accepted: int) -> Any:
    if status not in accepted:
        _print_json(payload)
        raise CliError(f"API returned {status}")
    return payload


def _passthrough(args, path: str, *accepted: int) -> int:
    """Read commands print the API response body verbatim, so CLI output is
    byte-identical to what the REST API served."""
    status, raw = api_request_raw(args, "GET", path)
    body = raw.decode("utf-8")
    if status not in accepted:
        print(body)
        raise CliError(f"API returned {status}")
    print(body)
    return EXIT_OK


# -- service commands -----------------------------------------------------------

def cmd_serve(args) -> int:
    if args.what == "workers":
        return _serve_workers(args)
    node = PlatformNode(
        _data_dir(args),
        heartbeat_interval=args.heartbeat_interval,
        job_timeout=args.job_timeout,
    )
    api_server = None
    broker_addr = args.broker or _env("TEXTPIPE_BROKER") or DEFAULT_LISTEN
    try:
        if args.what in ("broker", "all"):
            host, port = node.start_broker(broker_addr)
            print(f"broker listening on {host}:{port}", flush=True)
        if args.what in ("api", "all"):
            api_server = ApiServer(node, cors_origin=args.cors_origin)
            host, port = api_server.start(args.http_addr)
            print(f"api listening on http://{host}:{port}", flush=True)
        stop = {"flag": False}

        def _stop(signum, frame):
            stop["flag"] = True

        signal.signal(signal.SIGTERM, _stop)
        signal.signal(signal.SIGINT, _stop)
        while not stop["flag"]:
            time.sleep(0.2)
    finally:
        if api_server is not None:
            api_server.stop()
        node.close()
    return EXIT_OK


def _worker_process(address: str, only: Optional[list[str]], heartbeat: float) -> None:
    logging.basicConfig(level=logging.INFO)
    registry = default_registry(only=only)
    run_worker_loop(address, registry, only=only, heartbeat_interval=heartbeat)


def _serve_workers(args) -> int:
    address = args.broker or _env("TEXTPIPE_BROKER") or DEFAULT_LISTEN
    only = args.only.split(",") if args.only else None
    if only:
        known = set(default_registry().names())
        unknown = sorted(set(only) - known)
        if unknown:
            raise CliError(
                f"unknown worker(s) {', '.join(unknown)}; "
                f"built-ins are {', '.join(sorted(known))}"
            )
    processes = []
    for _ in range(args.count):
        proc = multiprocessing.Process(
            target=_worker_process,
            args=(address, only, args.heartbeat_interval),
        )
        proc.start()
        processes.append(proc)
    print(
        f"{len(processes)} worker process(es) serving "
        f"{only or 'all built-in workers'} via {address}",
        flush=True,
    )

    def _stop(signum, frame):
        for proc in processes:
            proc.terminate()

    signal.signal(signal.SIGTERM, _stop)
    signal.signal(signal.SIGINT, _stop)
    for proc in processes:
        proc.join()
    return EXIT_OK


def cmd_token(args) -> int:
    if args.action != "create":
        raise CliError("supported: token create <principal>")
    with DocumentStore(_data_dir(args)) as handle:
        token = handle.create_token(args.principal)
    print(token)
    return EXIT_OK


def cmd_reindex(args) -> int:
    with DocumentStore(_data_dir(args)) as handle:
        index = InvertedIndex(handle.index_dir / "index.json")
        count = rebuild_from_store(index, handle)
    _print_json({"documents_indexed": count})
    return EXIT_OK


# -- client commands --------------------------------------------------------------

def _resolve_corpus(args, name_or_id: str) -> str:
    status, corpora = api_request(args, "GET", "/v1/corpora")
    _expect(status, corpora, 200)
    for corpus in corpora:
        if corpus["id"] == name_or_id or corpus["name"] == name_or_id:
            return corpus["id"]
    status, created = api_request(
        args,
        "POST",
        "/v1/corpora",
        body=json.dumps({"name": name_or_id}).encode("utf-8"),
        headers={"Content-Type": "application/json"},
    )
    _expect(status, created, 201)
    return created["id"]


def _guess_type(path: Path) -> Optional[str]:
    suffix = path.suffix.lower()
    if suffix in (".html", ".htm"):
        return "text/html"
    if suffix in (".txt", ".text", ".md"):
        return "text/plain"
    return None


def cmd_upload(args) -> int:
    corpus_id = _resolve_corpus(args, args.corpus)
    uploads = []
    for name in args.files:
        path = Path(name)
        if not path.is_file():
            raise CliError(f"no such file: {path}")
        headers = {"X-Filename": path.name}
        declared = _guess_type(path)
        if declared:
            headers["Content-Type"] = declared
        status, payload = api_request(
            args,
            "POST",
            f"/v1/corpora/{corpus_id}/documents",
            body=path.read_bytes(),
            headers=headers,
        )
        _expect(status, payload, 202)
        uploads.append({"file": str(path), **payload})
    _print_json({"corpus": corpus_id, "uploads": uploads})
    return EXIT_OK


def cmd_submit(args) -> int:
    spec_path = Path(args.pipeline)
    if not spec_path.is_file():
        raise CliError(f"no such file: {spec_path}")
    status, payload = api_request(
        args,
        "POST",
        "/v1/pipelines",
        body=spec_path.read_bytes(),
        headers={"Content-Type": "application/json"},
    )
    _expect(status, payload, 202)
    _print_json(payload)
    return EXIT_OK


def cmd_status(args) -> int:
    return _passthrough(args, f"/v1/runs/{args.run}", 200)


def cmd_search(args) -> int:
    from urllib.parse import quote

    q = quote(" ".join(args.terms))
    path = f"/v1/search?q={q}"
    if args.corpus:
        path += f"&corpus={args.corpus}"
    return _passthrough(args, path, 200)


def cmd_concordance(args) -> int:
    from urllib.parse import quote

    path = f"/v1/concordance?term={quote(args.term)}&width={args.width}"
    if args.corpus:
        path += f"&corpus={args.corpus}"
    return _passthrough(args, path, 200)


def cmd_result(args) -> int:
    return _passthrough(
        args, f"/v1/documents/{args.document}/results/{args.key}", 200, 202
    )


# -- argument parsing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textpipe",
        description="Distributed document-analysis platform",
    )
    parser.add_argument("--data-dir", help="data directory (or TEXTPIPE_DATA)")
    parser.add_argument("--api", help="API base address (or TEXTPIPE_API)")
    parser.add_argument("--token", help="API token (or TEXTPIPE_TOKEN)")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run services")
    serve.add_argument("what", choices=["broker", "api", "all", "workers"])
    serve.add_argument("--broker", help="broker address (or TEXTPIPE_BROKER)")
    serve.add_argument("--http-addr", default=DEFAULT_HTTP_ADDR)
    serve.add_argument("--cors-origin", default=None)
    serve.add_argument("--only", help="comma-separated worker names")
    serve.add_argument("--count", type=int, default=1, help="worker processes")
    serve.add_argument(
        "--heartbeat-interval",
        type=float,
        default=DEFAULT_HEARTBEAT_INTERVAL,
        dest="heartbeat_interval",
    )
    serve.add_argument("--job-timeout", type=float, default=60.0)
    serve.set_defaults(func=cmd_serve)

    token = sub.add_parser("token", help="manage API tokens")
    token.add_argument("action", choices=["create"])
    token.add_argument("principal")
    token.set_defaults(func=cmd_token)

    reindex = sub.add_parser("reindex", help="rebuild the full-text index")
    reindex.set_defaults(func=cmd_reindex)

    upload = sub.add_parser("upload", help="upload documents to a corpus")
    upload.add_argument("corpus", help="corpus id or name (created if missing)")
    upload.add_argument("files", nargs="+")
    upload.set_defaults(func=cmd_upload)

    submit = sub.add_parser("submit", help="submit a pipeline spec file")
    submit.add_argument("pipeline")
    submit.set_defaults(func=cmd_submit)

    status = sub.add_parser("status", help="show a run report")
    status.add_argument("run")
    status.set_defaults(func=cmd_status)

    search = sub.add_parser("search", help="full-text search")
    search.add_argument("terms", nargs="+")
    search.add_argument("--corpus")
    search.set_defaults(func=cmd_search)

    concordance = sub.add_parser("concordance", help="keyword in context")
    concordance.add_argument("term")
    concordance.add_argument("--width", type=int, default=5)
    concordance.add_argument("--corpus")
    concordance.set_defaults(func=cmd_concordance)

    result = sub.add_parser("result", help="fetch one analysis result")
    result.add_argument("document")
    result.add_argument("key")
    result.set_defaults(func=cmd_result)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(
        level=os.environ.get("TEXTPIPE_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(str(err), file=sys.stderr)
        return err.code
    except KeyboardInterrupt:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

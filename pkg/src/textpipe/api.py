"""HTTP REST facade over the platform node.

Every request carries "Authorization: Bearer <token>"; a principal only
reaches corpora it owns. Bodies are JSON; document uploads send the raw
bytes with an X-Filename header. Pending analyses answer 202 with the job
state so clients can poll.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Optional
from urllib.parse import parse_qs, urlsplit

from . import index as index_mod
from . import model, scheduler, store
from .model import PipelineSpec
from .service import PlatformNode, UnsupportedType

logger = logging.getLogger(__name__)

DEFAULT_HTTP_ADDR = "127.0.0.1:8080"

API_DESCRIPTION = {
    "name": "textpipe",
    "version": "v1",
    "auth": "Authorization: Bearer <token>",
    "endpoints": [
        {"method": "POST", "path": "/v1/corpora", "body": {"name": "text"},
         "returns": "201 {id}"},
        {"method": "GET", "path": "/v1/corpora",
         "returns": "200 [{id, name, documents}]"},
        {"method": "GET", "path": "/v1/corpora/{id}",
         "returns": "200 {id, name, created_at, documents: [document ids]}"},
        {"method": "POST", "path": "/v1/corpora/{id}/documents",
         "body": "raw bytes + X-Filename header",
         "returns": "202 {document_id, run}"},
        {"method": "GET", "path": "/v1/documents/{id}",
         "returns": "200 metadata + result_keys"},
        {"method": "GET", "path": "/v1/documents/{id}/results/{key}",
         "returns": "200 value | 202 {state} | 404"},
        {"method": "POST", "path": "/v1/pipelines",
         "body": {"pipes": [["from", "to"]], "workers": ["name"],
                  "data": {}, "corpus": "id"},
         "returns": "202 {run}"},
        {"method": "GET", "path": "/v1/runs/{id}",
         "returns": "200 {run, jobs: [{worker, document, state, attempts}]}"},
        {"method": "GET", "path": "/v1/search?q=terms&corpus=id",
         "returns": "200 {hits: [{document, score, filename}]}"},
        {"method": "GET",
         "path": "/v1/concordance?term=w&width=5&corpus=id",
         "returns": "200 {lines: [{document, position, left, keyword, right}]}"},
        {"method": "GET", "path": "/v1/spec", "returns": "200 this document"},
    ],
}


class _HttpError(Exception):
    def __init__(self, status: int, error: str, detail: str = ""):
        super().__init__(error)
        self.status = status
        self.error = error
        self.detail = detail


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "textpipe/0.1"

    # quiet the default stderr access log
    def log_message(self, fmt, *args):
        logger.debug("http %s", fmt % args)

    @property
    def node(self) -> PlatformNode:
        return self.server.node  # type: ignore[attr-defined]

    @property
    def cors_origin(self) -> Optional[str]:
        return self.server.cors_origin  # type: ignore[attr-defined]

    # -- plumbing ---------------------------------------------------------------

    def _send_json(self, status: int, payload: Any) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        if self.cors_origin:
            self.send_header("Access-Control-Allow-Origin", self.cors_origin)
        self.end_headers()
        self.wfile.write(body)

    def _fail(self, err: _HttpError) -> None:
        self._send_json(
            err.status, {"error": err.error, "detail": err.detail}
        )

    def _principal(self) -> str:
        header = self.headers.get("Authorization", "")
        if header.startswith("Bearer "):
            principal = self.node.store.lookup_token(header[len("Bearer "):])
            if principal is not None:
                return principal
        raise _HttpError(401, "Unauthorized", "missing or invalid bearer token")

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0") or "0")
        if length > model.MAX_DOCUMENT_BYTES + 4096:
            raise _HttpError(413, "OversizeDocument", "request body too large")
        return self.rfile.read(length) if length else b""

    def _read_json(self) -> dict:
        raw = self._read_body()
        try:
            parsed = json.loads(raw.decode("utf-8")) if raw else {}
        except (ValueError, UnicodeDecodeError) as exc:
            raise _HttpError(400, "BadRequest", f"body is not valid JSON: {exc}")
        if not isinstance(parsed, dict):
            raise _HttpError(400, "BadRequest", "body must be a JSON object")
        return parsed

    def _own_corpus(self, corpus_id: str, principal: str):
        try:
            corpus = self.node.store.get_corpus(corpus_id)
        except store.NotFound:
            raise _HttpError(404, "NotFound", f"no corpus {corpus_id}")
        if corpus.owner != principal:
            raise _HttpError(403, "Forbidden", "corpus belongs to another principal")
        return corpus

    def _own_document(self, document_id: str, principal: str):
        try:
            document = self.node.store.get_document(document_id)
        except store.NotFound:
            raise _HttpError(404, "NotFound", f"no document {document_id}")
        self._own_corpus(document.corpus, principal)
        return document

    def _owned_corpus_ids(self, principal: str) -> set[str]:
        return {c.id for c in self.node.store.list_corpora(principal)}

    def _corpus_scope(self, query: dict, principal: str) -> set[str]:
        """The corpora a query may touch: the requested one (verified) or
        everything the principal owns."""
        requested = (query.get("corpus") or [None])[0]
        if requested:
            self._own_corpus(requested, principal)
            return {requested}
        return self._owned_corpus_ids(principal)

    # -- HTTP methods ----------------------------------------------------------------

    def do_OPTIONS(self):  # noqa: N802 - stdlib naming
        self.send_response(204)
        if self.cors_origin:
            self.send_header("Access-Control-Allow-Origin", self.cors_origin)
            self.send_header(
                "Access-Control-Allow-Methods", "GET, POST, OPTIONS"
            )
            self.send_header(
                "Access-Control-Allow-Headers",
                "Authorization, Content-Type, X-Filename",
            )
            self.send_header("Access-Control-Max-Age", "600")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):  # noqa: N802
        self._route("GET")

    def do_POST(self):  # noqa: N802
        self._route("POST")

    def _route(self, method: str) -> None:
        try:
            split = urlsplit(self.path)
            path = split.path.rstrip("/") or "/"
            query = parse_qs(split.query)
            principal = self._principal()
            for pattern, handler_method, handler in _ROUTES:
                match = pattern.fullmatch(path)
                if match and handler_method == method:
                    handler(self, principal, query, *match.groups())
                    return
            if any(p.fullmatch(path) for p, _, _ in _ROUTES):
                raise _HttpError(405, "MethodNotAllowed", f"{method} {path}")
            raise _HttpError(404, "NotFound", f"no route for {path}")
        except _HttpError as err:
            self._fail(err)
        except BrokenPipeError:
            pass
        except Exception as exc:
            logger.exception("unhandled API error")
            self._fail(_HttpError(500, "Internal", str(exc)))

    # -- endpoints ----------------------------------------------------------------

    def _get_spec(self, principal, query):
        self._send_json(200, API_DESCRIPTION)

    def _list_corpora(self, principal, query):
        corpora = self.node.store.list_corpora(principal)
        self._send_json(
            200,
            [
                {
                    "id": c.id,
                    "name": c.name,
                    "created_at": model.format_timestamp(c.created_at),
                    "documents": len(c.document_ids),
                }
                for c in corpora
            ],
        )

    def _get_corpus(self, principal, query, corpus_id):
        corpus = self._own_corpus(corpus_id, principal)
        self._send_json(
            200,
            {
                "id": corpus.id,
                "name": corpus.name,
                "created_at": model.format_timestamp(corpus.created_at),
                "documents": list(corpus.document_ids),
            },
        )

    def _create_corpus(self, principal, query):
        body = self._read_json()
        name = body.get("name", "")
        if not isinstance(name, str) or not name:
            raise _HttpError(400, "BadRequest", "corpus name must be non-empty")
        try:
            corpus = self.node.create_corpus(name, principal)
        except store.DuplicateCorpusName as exc:
            raise _HttpError(409, "DuplicateCorpusName", str(exc))
        self._send_json(201, {"id": corpus.id, "name": corpus.name})

    def _upload_document(self, principal, query, corpus_id):
        self._own_corpus(corpus_id, principal)
        filename = self.headers.get("X-Filename") or (
            query.get("filename") or [""]
        )[0]
        declared = self.headers.get("Content-Type")
        if declared:
            declared = declared.split(";")[0].strip().lower()
        if declared in ("", "application/octet-stream"):
            declared = None
        raw = self._read_body()
        try:
            document, run = self.node.upload_document(
                corpus_id, filename, raw, declared
            )
        except UnsupportedType as exc:
            raise _HttpError(415, "UnsupportedType", str(exc))
        except model.OversizeDocument as exc:
            raise _HttpError(413, "OversizeDocument", str(exc))
        except model.EmptyFilename as exc:
            raise _HttpError(400, "EmptyFilename", str(exc))
        self._send_json(202, {"document_id": document.id, "run": run.run})

    def _get_document(self, principal, query, document_id):
        document = self._own_document(document_id, principal)
        self._send_json(
            200,
            {
                "id": document.id,
                "corpus": document.corpus,
                "filename": document.filename,
                "declared_type": document.declared_type,
                "uploaded_at": model.format_timestamp(document.uploaded_at),
                "size": len(document.raw),
                "result_keys": self.node.store.result_keys(document_id),
            },
        )

    def _get_result(self, principal, query, document_id, key):
        self._own_document(document_id, principal)
        if not model.is_valid_key(key):
            raise _HttpError(400, "InvalidKey", f"bad analysis key {key!r}")
        state, value = self.node.result_state(document_id, key)
        if state == "ready":
            self._send_json(200, value)
        elif state == "pending":
            self._send_json(202, {"state": value})
        else:
            raise _HttpError(404, "NotFound", f"no result {key} for {document_id}")

    def _submit_pipeline(self, principal, query):
        body = self._read_json()
        spec = PipelineSpec.from_interchange(body)
        if spec.target is None:
            raise _HttpError(400, "BadRequest", "corpus or documents required")
        if isinstance(spec.target, (list, tuple)):
            for doc_id in spec.target:
                self._own_document(str(doc_id), principal)
        else:
            self._own_corpus(str(spec.target), principal)
        try:
            run = self.node.submit_pipeline(spec)
        except scheduler.SchedulerError as exc:
            raise _HttpError(400, type(exc).__name__, str(exc))
        self._send_json(202, {"run": run.run})

    def _get_run(self, principal, query, run_id):
        try:
            report = self.node.run_report(run_id)
        except store.NotFound:
            raise _HttpError(404, "NotFound", f"no run {run_id}")
        owned = self._owned_corpus_ids(principal)
        for document_id in {j["document"] for j in report["jobs"]}:
            try:
                doc = self.node.store.get_document(document_id)
            except store.NotFound:
                continue
            if doc.corpus not in owned:
                raise _HttpError(403, "Forbidden", "run touches another principal's corpus")
        self._send_json(200, report)

    def _search(self, principal, query):
        q = (query.get("q") or [""])[0]
        terms = q.split()
        scope = self._corpus_scope(query, principal)
        try:
            hits = self.node.search(terms, corpus=scope)
        except index_mod.EmptyQuery as exc:
            raise _HttpError(400, "EmptyQuery", str(exc))
        payload = []
        for document_id, score in hits:
            doc = self.node.store.get_document(document_id)
            payload.append(
                {
                    "document": document_id,
                    "score": score,
                    "filename": doc.filename,
                    "corpus": doc.corpus,
                }
            )
        self._send_json(200, {"query": terms, "hits": payload})

    def _concordance(self, principal, query):
        term = (query.get("term") or [""])[0]
        if not term:
            raise _HttpError(400, "BadRequest", "term parameter required")
        try:
            width = int((query.get("width") or ["5"])[0])
        except ValueError:
            raise _HttpError(400, "BadRequest", "width must be an integer")
        scope = self._corpus_scope(query, principal)
        try:
            lines = self.node.concordance(term, width, corpus=scope)
        except index_mod.InvalidWidth as exc:
            raise _HttpError(400, "InvalidWidth", str(exc))
        self._send_json(200, {"term": term, "width": width, "lines": lines})


_ROUTES = [
    (re.compile(r"/v1/spec"), "GET", ApiHandler._get_spec),
    (re.compile(r"/v1/corpora"), "GET", ApiHandler._list_corpora),
    (re.compile(r"/v1/corpora"), "POST", ApiHandler._create_corpus),
    (re.compile(r"/v1/corpora/([0-9a-f]{32})"), "GET", ApiHandler._get_corpus),
    (re.compile(r"/v1/corpora/([0-9a-f]{32})/documents"), "POST",
     ApiHandler._upload_document),
    (re.compile(r"/v1/documents/([0-9a-f]{32})"), "GET",
     ApiHandler._get_document),
    (re.compile(r"/v1/documents/([0-9a-f]{32})/results/([a-z0-9_]{1,64})"),
     "GET", ApiHandler._get_result),
    (re.compile(r"/v1/pipelines"), "POST", ApiHandler._submit_pipeline),
    (re.compile(r"/v1/runs/([0-9a-f]{32})"), "GET", ApiHandler._get_run),
    (re.compile(r"/v1/search"), "GET", ApiHandler._search),
    (re.compile(r"/v1/concordance"), "GET", ApiHandler._concordance),
]


class ApiServer:
    """Threaded HTTP server bound to a platform node."""

    def __init__(self, node: PlatformNode, cors_origin: Optional[str] = None):
        self.node = node
        self.cors_origin = cors_origin
        self._httpd: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None

    def start(self, addr: str = DEFAULT_HTTP_ADDR) -> tuple[str, int]:
        host, _, port = addr.rpartition(":")
        httpd = ThreadingHTTPServer(
            (host or "127.0.0.1", int(port)), ApiHandler
        )
        httpd.daemon_threads = True
        httpd.node = self.node  # type: ignore[attr-defined]
        httpd.cors_origin = self.cors_origin  # type: ignore[attr-defined]
        self._httpd = httpd
        self._thread = threading.Thread(
            target=lambda: httpd.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()
        bound = httpd.server_address
        logger.info("api listening on %s:%d", bound[0], bound[1])
        return bound

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2)

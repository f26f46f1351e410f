"""File-backed store for corpora, documents, analysis results, tokens and runs.

Records are JSON files written atomically (temp file + rename) or JSON lines
appended to per-document result logs. A reader never sees a half-written
record: rewrites only become visible on rename, and a torn trailing line in
an append log is discarded on open. One process owns the data directory at a
time, enforced with an advisory file lock.
"""

from __future__ import annotations

import base64
import fcntl
import hashlib
import hmac
import json
import logging
import os
import secrets
import threading
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .model import (
    AnalysisResult,
    Corpus,
    Document,
    canonical_json,
    format_timestamp,
    new_id,
    now_utc,
    parse_timestamp,
    validate_analysis_value,
)

logger = logging.getLogger(__name__)

STORED = "stored"
DUPLICATE = "duplicate"
SUPERSEDED = "superseded"

# Compact a result log once it holds this many more lines than live keys.
_COMPACT_SLACK = 8


class StoreError(Exception):
    pass


class NotFound(StoreError):
    pass


class DuplicateCorpusName(StoreError):
    pass


class UnknownDocument(StoreError):
    pass


class StoreLocked(StoreError):
    pass


class StoreCorruption(StoreError):
    pass


class CrashPoint(Exception):
    """Raised by fault-injection hooks to simulate a crash mid-write."""

    def __init__(self, partial_bytes: Optional[int] = None):
        super().__init__("injected crash")
        self.partial_bytes = partial_bytes


class DocumentStore:
    """Single-process persistent store rooted at a data directory."""

    def __init__(self, root: os.PathLike | str, create: bool = True):
        self.root = Path(root)
        if create:
            self.root.mkdir(parents=True, exist_ok=True)
        for sub in ("corpora", "documents", "runs", "auth"):
            (self.root / sub).mkdir(exist_ok=True)
        self._lock_file = open(self.root / "lock", "a+")
        try:
            fcntl.flock(self._lock_file, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            self._lock_file.close()
            raise StoreLocked(f"data directory {self.root} is already in use")
        self._mutex = threading.RLock()
        # Test seam: called with a seam name before risky write steps; a
        # hook may raise CrashPoint to abort the write mid-flight.
        self._fault_hook: Optional[Callable[[str], None]] = None
        self._corpora: dict[str, Corpus] = {}
        self._corpus_names: set[tuple[str, str]] = set()
        self._documents: dict[str, dict] = {}  # id -> meta record
        self._results: dict[str, dict[str, dict]] = {}  # doc -> key -> record
        self._result_lines: dict[str, int] = {}  # doc -> lines in log file
        self._next_seq = 1
        self._load()

    def close(self) -> None:
        with self._mutex:
            if not self._lock_file.closed:
                fcntl.flock(self._lock_file, fcntl.LOCK_UN)
                self._lock_file.close()

    def __enter__(self) -> "DocumentStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- loading ------------------------------------------------------------

    def _load(self) -> None:
        for path in sorted((self.root / "corpora").glob("*.json")):
            record = self._read_json(path)
            corpus = Corpus(
                id=record["id"],
                name=record["name"],
                owner=record["owner"],
                created_at=parse_timestamp(record["created_at"]),
                document_ids=tuple(record["document_ids"]),
            )
            self._corpora[corpus.id] = corpus
            self._corpus_names.add((corpus.owner, corpus.name))
        for path in sorted((self.root / "documents").glob("*.meta.json")):
            meta = self._read_json(path)
            self._documents[meta["id"]] = meta
            self._next_seq = max(self._next_seq, meta["seq"] + 1)
        for doc_id in self._documents:
            self._load_results(doc_id)

    def _load_results(self, doc_id: str) -> None:
        path = self._results_path(doc_id)
        records: dict[str, dict] = {}
        lines = 0
        if path.exists():
            parts = path.read_bytes().split(b"\n")
            for i, line in enumerate(parts):
                if not line:
                    continue
                try:
                    record = json.loads(line.decode("utf-8"))
                except (ValueError, UnicodeDecodeError):
                    # A torn trailing line (no newline after it) is the
                    # residue of a crashed append; anything earlier means
                    # real corruption.
                    if i == len(parts) - 1:
                        logger.warning(
                            "discarding torn result line for %s", doc_id
                        )
                        break
                    raise StoreCorruption(f"corrupt result log {path}")
                records[record["key"]] = record
                lines += 1
        self._results[doc_id] = records
        self._result_lines[doc_id] = lines

    def _read_json(self, path: Path) -> dict:
        try:
            return json.loads(path.read_text("utf-8"))
        except ValueError as exc:
            raise StoreCorruption(f"corrupt record {path}: {exc}") from exc

    # -- write primitives ----------------------------------------------------

    def _seam(self, name: str) -> None:
        if self._fault_hook is not None:
            self._fault_hook(name)

    def _atomic_write(self, path: Path, data: bytes) -> None:
        tmp = path.with_name(path.name + f".tmp{os.getpid()}")
        self._seam("pre-temp-write")
        with open(tmp, "wb") as f:
            try:
                self._seam("mid-temp-write")
            except CrashPoint as crash:
                if crash.partial_bytes is not None:
                    f.write(data[: crash.partial_bytes])
                    f.flush()
                raise
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        self._seam("pre-rename")
        os.replace(tmp, path)
        self._seam("post-rename")

    def _append_line(self, path: Path, record: dict) -> None:
        line = (canonical_json(record) + "\n").encode("utf-8")
        with open(path, "ab") as f:
            try:
                self._seam("append")
            except CrashPoint as crash:
                if crash.partial_bytes is not None:
                    f.write(line[: crash.partial_bytes])
                    f.flush()
                raise
            f.write(line)
            f.flush()
            os.fsync(f.fileno())

    def _results_path(self, doc_id: str) -> Path:
        return self.root / "documents" / f"{doc_id}.results.jsonl"

    # -- corpora -------------------------------------------------------------

    def create_corpus(self, name: str, owner: str) -> Corpus:
        with self._mutex:
            if (owner, name) in self._corpus_names:
                raise DuplicateCorpusName(
                    f"owner {owner!r} already has a corpus named {name!r}"
                )
            corpus = Corpus(
                id=new_id(),
                name=name,
                owner=owner,
                created_at=now_utc(),
            )
            self._write_corpus(corpus)
            self._corpora[corpus.id] = corpus
            self._corpus_names.add((owner, name))
            return corpus

    def _write_corpus(self, corpus: Corpus) -> None:
        record = {
            "id": corpus.id,
            "name": corpus.name,
            "owner": corpus.owner,
            "created_at": format_timestamp(corpus.created_at),
            "document_ids": list(corpus.document_ids),
        }
        self._atomic_write(
            self.root / "corpora" / f"{corpus.id}.json",
            canonical_json(record).encode("utf-8"),
        )

    def get_corpus(self, corpus_id: str) -> Corpus:
        with self._mutex:
            corpus = self._corpora.get(corpus_id)
            if corpus is None:
                raise NotFound(f"no corpus {corpus_id}")
            return corpus

    def find_corpus(self, owner: str, name: str) -> Optional[Corpus]:
        with self._mutex:
            for corpus in self._corpora.values():
                if corpus.owner == owner and corpus.name == name:
                    return corpus
            return None

    def list_corpora(self, owner: Optional[str] = None) -> list[Corpus]:
        with self._mutex:
            found = [
                c
                for c in self._corpora.values()
                if owner is None or c.owner == owner
            ]
            found.sort(key=lambda c: (c.created_at, c.id))
            return found

    def list_corpus(self, corpus_id: str) -> list[str]:
        """Document ids of a corpus in upload order."""
        return list(self.get_corpus(corpus_id).document_ids)

    # -- documents -----------------------------------------------------------

    def put_document(self, document: Document) -> None:
        with self._mutex:
            corpus = self._corpora.get(document.corpus)
            if corpus is None:
                raise NotFound(f"no corpus {document.corpus}")
            if document.id in self._documents:
                raise StoreError(f"document {document.id} already stored")
            seq = self._next_seq
            meta = {
                "id": document.id,
                "corpus": document.corpus,
                "filename": document.filename,
                "declared_type": document.declared_type,
                "uploaded_at": format_timestamp(document.uploaded_at),
                "seq": seq,
            }
            raw_path = self.root / "documents" / f"{document.id}.raw"
            self._atomic_write(raw_path, document.raw)
            self._atomic_write(
                self.root / "documents" / f"{document.id}.meta.json",
                canonical_json(meta).encode("utf-8"),
            )
            updated = corpus.with_document(document.id)
            self._write_corpus(updated)
            self._corpora[corpus.id] = updated
            self._documents[document.id] = meta
            self._results.setdefault(document.id, {})
            self._result_lines.setdefault(document.id, 0)
            self._next_seq = seq + 1

    def get_document(self, document_id: str) -> Document:
        with self._mutex:
            meta = self._documents.get(document_id)
            if meta is None:
                raise NotFound(f"no document {document_id}")
            raw = (self.root / "documents" / f"{document_id}.raw").read_bytes()
            return Document(
                id=meta["id"],
                corpus=meta["corpus"],
                filename=meta["filename"],
                raw=raw,
                declared_type=meta["declared_type"],
                uploaded_at=parse_timestamp(meta["uploaded_at"]),
            )

    def document_seq(self, document_id: str) -> int:
        """Global upload order of a document (1-based, monotonic)."""
        with self._mutex:
            meta = self._documents.get(document_id)
            if meta is None:
                raise NotFound(f"no document {document_id}")
            return meta["seq"]

    def has_document(self, document_id: str) -> bool:
        with self._mutex:
            return document_id in self._documents

    def all_document_ids(self) -> list[str]:
        """All stored documents in upload order."""
        with self._mutex:
            return sorted(self._documents, key=lambda d: self._documents[d]["seq"])

    # -- analysis results ----------------------------------------------------

    def put_result(self, result: AnalysisResult) -> str:
        """Store one analysis result.

        Returns STORED for a first write, DUPLICATE when the same
        (document, key, producer_version) is already present (no bytes
        change), or SUPERSEDED when a different producer_version is
        replaced.
        """
        validate_analysis_value({result.key: result.value})
        with self._mutex:
            if result.document not in self._documents:
                raise UnknownDocument(f"no document {result.document}")
            existing = self._results[result.document].get(result.key)
            if (
                existing is not None
                and existing["producer_version"] == result.producer_version
            ):
                return DUPLICATE
            record = {
                "key": result.key,
                # Round-trip through the interchange form so stored values
                # are exactly what readers will see.
                "value": json.loads(canonical_json(result.value)),
                "producer_name": result.producer_name,
                "producer_version": result.producer_version,
                "produced_at": format_timestamp(result.produced_at),
            }
            self._append_line(self._results_path(result.document), record)
            self._results[result.document][result.key] = record
            self._result_lines[result.document] += 1
            self._maybe_compact(result.document)
            return SUPERSEDED if existing is not None else STORED

    def _maybe_compact(self, doc_id: str) -> None:
        live = len(self._results[doc_id])
        lines = self._result_lines[doc_id]
        if lines > 2 * live + _COMPACT_SLACK:
            body = "".join(
                canonical_json(rec) + "\n"
                for rec in self._results[doc_id].values()
            )
            self._atomic_write(self._results_path(doc_id), body.encode("utf-8"))
            self._result_lines[doc_id] = live

    def get_result(self, document_id: str, key: str) -> Optional[Any]:
        with self._mutex:
            record = self._results.get(document_id, {}).get(key)
            return None if record is None else record["value"]

    def get_result_record(self, document_id: str, key: str) -> Optional[dict]:
        with self._mutex:
            record = self._results.get(document_id, {}).get(key)
            return None if record is None else dict(record)

    def has_result(self, document_id: str, key: str, version: str) -> bool:
        """Cache predicate: a result for (document, key) produced at exactly
        this version exists."""
        with self._mutex:
            record = self._results.get(document_id, {}).get(key)
            return record is not None and record["producer_version"] == version

    def result_keys(self, document_id: str) -> list[str]:
        with self._mutex:
            return sorted(self._results.get(document_id, {}))

    # -- auth tokens ----------------------------------------------------------

    def create_token(self, principal: str) -> str:
        """Mint an API token for a principal; only its hash is stored."""
        token = base64.urlsafe_b64encode(secrets.token_bytes(32)).decode("ascii")
        token = token.rstrip("=")
        record = {
            "principal": principal,
            "token_sha256": hashlib.sha256(token.encode("ascii")).hexdigest(),
            "created_at": format_timestamp(now_utc()),
        }
        with self._mutex:
            self._append_line(self.root / "auth" / "tokens.jsonl", record)
        return token

    def lookup_token(self, token: str) -> Optional[str]:
        """Resolve a presented token to its principal, or None."""
        digest = hashlib.sha256(token.encode("utf-8")).hexdigest()
        principal = None
        for record in self._token_records():
            if hmac.compare_digest(record["token_sha256"], digest):
                principal = record["principal"]
        return principal

    def _token_records(self) -> Iterable[dict]:
        path = self.root / "auth" / "tokens.jsonl"
        if not path.exists():
            return []
        records = []
        data = path.read_bytes()
        for line in data.split(b"\n"):
            if not line:
                continue
            try:
                records.append(json.loads(line.decode("utf-8")))
            except (ValueError, UnicodeDecodeError):
                logger.warning("discarding torn token line")
                break
        return records

    # -- run records -----------------------------------------------------------

    def put_run(self, run_id: str, record: dict) -> None:
        with self._mutex:
            self._atomic_write(
                self.root / "runs" / f"{run_id}.json",
                canonical_json(record).encode("utf-8"),
            )

    def get_run(self, run_id: str) -> dict:
        with self._mutex:
            path = self.root / "runs" / f"{run_id}.json"
            if not path.exists():
                raise NotFound(f"no run {run_id}")
            return self._read_json(path)

    # -- housekeeping ------------------------------------------------------------

    @property
    def index_dir(self) -> Path:
        path = self.root / "index"
        path.mkdir(exist_ok=True)
        return path

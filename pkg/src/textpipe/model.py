"""Core data model: documents, corpora, analysis results, jobs, pipeline specs.

Everything here is either an immutable value or a small state machine (Job);
persistence and scheduling behavior live elsewhere.
"""

from __future__ import annotations

import json
import math
import re
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Optional

# Documents larger than this are rejected at construction (configurable per call).
MAX_DOCUMENT_BYTES = 50 * 1024 * 1024

# Result keys produced by the built-in workers. Registered custom workers
# extend this set with their own produced keys.
BUILTIN_KEYS = frozenset(
    {
        "text",
        "mimetype",
        "language",
        "tokens",
        "sentences",
        "freqdist",
        "ngrams",
        "pos",
        "statistics",
    }
)

_KEY_RE = re.compile(r"[a-z0-9_]{1,64}\Z")
_ID_RE = re.compile(r"[0-9a-f]{32}\Z")


class ModelError(Exception):
    """Base class for model validation failures."""


class OversizeDocument(ModelError):
    pass


class EmptyFilename(ModelError):
    pass


class NotAMap(ModelError):
    pass


class EmptyMap(ModelError):
    pass


class InvalidKey(ModelError):
    pass


class UnserializableNode(ModelError):
    pass


class InvalidTransition(ModelError):
    pass


# ---------------------------------------------------------------------------
# Identifiers and timestamps
# ---------------------------------------------------------------------------

def new_id() -> str:
    """Fresh 128-bit random identifier as 32 lowercase hex characters."""
    return secrets.token_hex(16)


def render_id(value: str) -> str:
    return value


def parse_id(text: str) -> str:
    """Validate an identifier's textual form. parse(render(x)) == x."""
    if not isinstance(text, str) or not _ID_RE.fullmatch(text):
        raise ValueError(f"malformed identifier: {text!r}")
    return text


def is_valid_id(text: str) -> bool:
    return isinstance(text, str) and bool(_ID_RE.fullmatch(text))


def now_utc() -> datetime:
    return datetime.now(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    """RFC 3339 UTC with millisecond precision, e.g. 2024-05-01T12:00:00.000Z."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{dt.microsecond // 1000:03d}Z"


def parse_timestamp(text: str) -> datetime:
    if not text.endswith("Z"):
        raise ValueError(f"timestamp not UTC: {text!r}")
    return datetime.strptime(text[:-1], "%Y-%m-%dT%H:%M:%S.%f").replace(
        tzinfo=timezone.utc
    )


def is_valid_key(name: Any) -> bool:
    """Lexical rule for analysis keys: lowercase ASCII letters, digits,
    underscore; length 1..64."""
    return isinstance(name, str) and bool(_KEY_RE.fullmatch(name))


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Document:
    """One uploaded document. `raw` is immutable after creation."""

    id: str
    corpus: str
    filename: str
    raw: bytes
    declared_type: Optional[str]
    uploaded_at: datetime


@dataclass(frozen=True)
class Corpus:
    id: str
    name: str
    owner: str
    created_at: datetime
    document_ids: tuple[str, ...] = ()

    def with_document(self, document_id: str) -> "Corpus":
        if document_id in self.document_ids:
            return self
        return Corpus(
            id=self.id,
            name=self.name,
            owner=self.owner,
            created_at=self.created_at,
            document_ids=self.document_ids + (document_id,),
        )


@dataclass(frozen=True)
class AnalysisResult:
    """One named analysis value for one document; the unit of caching."""

    document: str
    key: str
    value: Any
    producer_name: str
    producer_version: str
    produced_at: datetime


def new_document(
    raw: bytes,
    filename: str,
    corpus: str,
    declared_type: Optional[str] = None,
    max_bytes: int = MAX_DOCUMENT_BYTES,
) -> Document:
    """Build a Document with a fresh id. Does not persist anything."""
    if not filename:
        raise EmptyFilename("document filename must be non-empty")
    if len(raw) > max_bytes:
        raise OversizeDocument(
            f"document is {len(raw)} bytes, limit is {max_bytes}"
        )
    return Document(
        id=new_id(),
        corpus=corpus,
        filename=filename,
        raw=bytes(raw),
        declared_type=declared_type,
        uploaded_at=now_utc(),
    )


def validate_analysis_value(value: Any) -> None:
    """Check that a worker's output is a usable analysis value.

    The value must be a map with at least one entry whose keys satisfy the
    analysis-key lexical rules (they name the produced results). The tree
    below may contain only maps with string keys, lists, strings, ints,
    finite floats, booleans and null, with no cycles. Raises a ModelError
    subclass otherwise.
    """
    if not isinstance(value, dict):
        raise NotAMap(f"analysis value must be a map, got {type(value).__name__}")
    if not value:
        raise EmptyMap("analysis value must have at least one entry")
    seen: set[int] = {id(value)}
    for key, child in value.items():
        if not is_valid_key(key):
            raise InvalidKey(f"invalid analysis key: {key!r}")
        _check_node(child, seen)


def _check_node(node: Any, seen: set[int]) -> None:
    if isinstance(node, dict):
        if id(node) in seen:
            raise UnserializableNode("cycle in analysis value")
        seen.add(id(node))
        for key, child in node.items():
            if not isinstance(key, str):
                raise InvalidKey(f"map key must be a string: {key!r}")
            _check_node(child, seen)
        seen.discard(id(node))
    elif isinstance(node, (list, tuple)):
        if id(node) in seen:
            raise UnserializableNode("cycle in analysis value")
        seen.add(id(node))
        for child in node:
            _check_node(child, seen)
        seen.discard(id(node))
    elif isinstance(node, bool) or node is None or isinstance(node, (str, int)):
        return
    elif isinstance(node, float):
        if not math.isfinite(node):
            raise UnserializableNode(f"non-finite number: {node!r}")
    else:
        raise UnserializableNode(
            f"unsupported node type: {type(node).__name__}"
        )


def canonical_json(value: Any) -> str:
    """Deterministic interchange rendering (sorted keys, no whitespace)."""
    return json.dumps(
        value, ensure_ascii=False, sort_keys=True, separators=(",", ":"),
        allow_nan=False,
    )


# ---------------------------------------------------------------------------
# Jobs
# ---------------------------------------------------------------------------

PENDING = "pending"
READY = "ready"
DISPATCHED = "dispatched"
DONE = "done"
FAILED = "failed"

JOB_STATES = (PENDING, READY, DISPATCHED, DONE, FAILED)

# pending -> ready -> dispatched -> done | failed | ready (requeue), plus
# cancellation of never-dispatched jobs when an upstream job fails
# terminally.
ALLOWED_TRANSITIONS = frozenset(
    {
        (PENDING, READY),
        (READY, DISPATCHED),
        (DISPATCHED, DONE),
        (DISPATCHED, FAILED),
        (DISPATCHED, READY),
        (PENDING, FAILED),
        (READY, FAILED),
    }
)


@dataclass
class Job:
    """One worker applied to one document within a run."""

    id: str
    run: str
    worker_name: str
    document: str
    state: str = PENDING
    attempts: int = 0
    last_error: Optional[str] = None

    def transition_to(self, new_state: str) -> None:
        if (self.state, new_state) not in ALLOWED_TRANSITIONS:
            raise InvalidTransition(
                f"job {self.id}: {self.state} -> {new_state} is not allowed"
            )
        self.state = new_state

    def note_attempt(self) -> None:
        self.attempts += 1

    @property
    def terminal(self) -> bool:
        return self.state in (DONE, FAILED)


@dataclass(frozen=True)
class PipelineSpec:
    """User-supplied pipe map plus run parameters and targets.

    `pipes` lists (from, to) worker-name edges; `workers` names entry
    workers so that single-worker runs need no edges. `target` is either a
    corpus id or an explicit list of document ids.
    """

    pipes: tuple[tuple[str, str], ...] = ()
    workers: tuple[str, ...] = ()
    data: dict = field(default_factory=dict)
    target: Any = None

    @classmethod
    def from_interchange(cls, doc: dict) -> "PipelineSpec":
        pipes = tuple(
            (str(edge[0]), str(edge[1])) for edge in doc.get("pipes", [])
        )
        workers = tuple(str(w) for w in doc.get("workers", []))
        target = doc.get("documents") or doc.get("corpus")
        return cls(
            pipes=pipes,
            workers=workers,
            data=dict(doc.get("data", {})),
            target=target,
        )

"""Worker contract and worker-side runtime.

A worker is a named pure function over one document: it declares the
analysis keys it requires, the keys it produces, and whether it reads the
raw document bytes. `invoke` checks both sides of that contract. The worker
loop connects to a broker, announces its workers, and processes one job at
a time until shut down.
"""

from __future__ import annotations

import base64
import logging
import os
import socket
import threading
import time
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from . import framing
from .model import (
    AnalysisResult,
    ModelError,
    is_valid_key,
    now_utc,
    validate_analysis_value,
)

logger = logging.getLogger(__name__)

DEFAULT_BROKER_ADDRESS = "127.0.0.1:7370"
DEFAULT_HEARTBEAT_INTERVAL = 2.0

# Reconnect backoff after connection loss: 0.5 s doubling up to 30 s.
BACKOFF_INITIAL = 0.5
BACKOFF_CAP = 30.0


class WorkerError(Exception):
    pass


class DuplicateName(WorkerError):
    pass


class ProducesRequiresOverlap(WorkerError):
    pass


class InvalidDescriptor(WorkerError):
    pass


class RequirementMismatch(WorkerError):
    pass


class UndeclaredOutputKey(WorkerError):
    pass


class WorkerPanic(WorkerError):
    """The worker's process function raised; captured, never propagated."""


ProcessFn = Callable[["WorkerInput"], dict[str, Any]]


@dataclass(frozen=True)
class WorkerDescriptor:
    """A worker's registration card: what it needs and what it yields."""

    name: str
    version: str
    requires: tuple[str, ...] = ()
    produces: frozenset[str] = frozenset()
    needs_raw: bool = False

    def validate(self) -> None:
        if not is_valid_key(self.name):
            raise InvalidDescriptor(f"bad worker name {self.name!r}")
        if not self.produces:
            raise InvalidDescriptor(f"worker {self.name} produces nothing")
        for key in list(self.requires) + list(self.produces):
            if not is_valid_key(key):
                raise InvalidDescriptor(f"bad analysis key {key!r}")
        if set(self.requires) & self.produces:
            raise ProducesRequiresOverlap(
                f"worker {self.name} requires keys it produces: "
                f"{sorted(set(self.requires) & self.produces)}"
            )

    def to_interchange(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "requires": list(self.requires),
            "produces": sorted(self.produces),
            "needs_raw": self.needs_raw,
        }

    @classmethod
    def from_interchange(cls, record: dict) -> "WorkerDescriptor":
        return cls(
            name=record["name"],
            version=record["version"],
            requires=tuple(record.get("requires", [])),
            produces=frozenset(record.get("produces", [])),
            needs_raw=bool(record.get("needs_raw", False)),
        )


@dataclass(frozen=True)
class WorkerInput:
    """Exactly the data a worker is allowed to see for one job."""

    document: str
    required_results: dict[str, Any]
    raw: Optional[bytes] = None
    declared_type: Optional[str] = None
    run_data: dict[str, Any] = field(default_factory=dict)


class Registry:
    """Name-keyed worker registry; read-mostly after startup."""

    def __init__(self):
        self._workers: dict[str, tuple[WorkerDescriptor, ProcessFn]] = {}
        self._lock = threading.Lock()

    def register(self, descriptor: WorkerDescriptor, process: ProcessFn) -> None:
        descriptor.validate()
        with self._lock:
            if descriptor.name in self._workers:
                raise DuplicateName(f"worker {descriptor.name!r} already registered")
            self._workers[descriptor.name] = (descriptor, process)

    def replace(self, descriptor: WorkerDescriptor, process: ProcessFn) -> None:
        """Re-register under an existing name (used to bump versions)."""
        descriptor.validate()
        with self._lock:
            self._workers[descriptor.name] = (descriptor, process)

    def get(self, name: str) -> WorkerDescriptor:
        with self._lock:
            if name not in self._workers:
                raise KeyError(name)
            return self._workers[name][0]

    def process_fn(self, name: str) -> ProcessFn:
        with self._lock:
            return self._workers[name][1]

    def has(self, name: str) -> bool:
        with self._lock:
            return name in self._workers

    def names(self) -> list[str]:
        with self._lock:
            return sorted(self._workers)

    def descriptors(self) -> list[WorkerDescriptor]:
        with self._lock:
            return [d for d, _ in self._workers.values()]

    def producers_of(self, key: str) -> list[str]:
        with self._lock:
            return sorted(
                name
                for name, (descriptor, _) in self._workers.items()
                if key in descriptor.produces
            )


def register_worker(
    registry: Registry, descriptor: WorkerDescriptor, process: ProcessFn
) -> None:
    registry.register(descriptor, process)


def invoke(
    descriptor: WorkerDescriptor,
    process: ProcessFn,
    work_input: WorkerInput,
) -> list[AnalysisResult]:
    """Run one worker over one input, enforcing the contract on both sides.

    The input must carry exactly the declared requires; the output must be
    a valid analysis value whose top-level keys are all declared in
    produces. Exceptions from the process function become WorkerPanic.
    """
    provided = set(work_input.required_results)
    declared = set(descriptor.requires)
    if provided != declared:
        missing = sorted(declared - provided)
        extra = sorted(provided - declared)
        raise RequirementMismatch(
            f"worker {descriptor.name}: missing={missing} extra={extra}"
        )
    if descriptor.needs_raw and work_input.raw is None:
        raise RequirementMismatch(f"worker {descriptor.name}: raw bytes absent")
    try:
        output = process(work_input)
    except Exception as exc:  # noqa: BLE001 - the contract demands capture
        raise WorkerPanic(
            f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=5)}"
        ) from exc
    try:
        validate_analysis_value(output)
    except ModelError as exc:
        raise WorkerPanic(f"worker {descriptor.name} returned bad value: {exc}")
    undeclared = set(output) - descriptor.produces
    if undeclared:
        raise UndeclaredOutputKey(
            f"worker {descriptor.name} emitted undeclared keys {sorted(undeclared)}"
        )
    produced_at = now_utc()
    return [
        AnalysisResult(
            document=work_input.document,
            key=key,
            value=value,
            producer_name=descriptor.name,
            producer_version=descriptor.version,
            produced_at=produced_at,
        )
        for key, value in output.items()
    ]


# ---------------------------------------------------------------------------
# Worker loop
# ---------------------------------------------------------------------------

def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    return host or "127.0.0.1", int(port)


def input_from_job_body(
    descriptor: WorkerDescriptor, body: dict[str, Any]
) -> WorkerInput:
    raw = None
    if descriptor.needs_raw:
        raw = base64.b64decode(body.get("raw", ""))
    return WorkerInput(
        document=body["document"],
        required_results=dict(body.get("required_results", {})),
        raw=raw,
        declared_type=body.get("declared_type"),
        run_data=dict(body.get("data", {})),
    )


class WorkerLoop:
    """Connects to a broker and serves jobs for a set of workers.

    One job at a time; heartbeats on a side thread; exponential reconnect
    backoff on connection loss; finishes the in-flight job and says BYE on
    shutdown.
    """

    def __init__(
        self,
        broker_address: str,
        registry: Registry,
        only: Optional[Sequence[str]] = None,
        heartbeat_interval: float = DEFAULT_HEARTBEAT_INTERVAL,
    ):
        self.address = broker_address
        self.registry = registry
        names = registry.names() if only is None else list(only)
        self.descriptors = {name: registry.get(name) for name in names}
        self.heartbeat_interval = heartbeat_interval
        self.shutdown = threading.Event()
        self._sock: Optional[socket.socket] = None
        self._send_lock = threading.Lock()

    def stop(self) -> None:
        self.shutdown.set()

    def _send(self, kind: str, body: dict) -> None:
        with self._send_lock:
            if self._sock is not None:
                framing.send_frame(self._sock, kind, body)

    def _heartbeat_thread(self, sock: socket.socket) -> None:
        while not self.shutdown.is_set() and self._sock is sock:
            time.sleep(self.heartbeat_interval)
            if self._sock is not sock:
                return
            try:
                self._send(framing.HEARTBEAT, {})
            except OSError:
                return

    def _connect(self) -> socket.socket:
        host, port = parse_address(self.address)
        sock = socket.create_connection((host, port), timeout=10)
        sock.settimeout(0.5)
        framing.send_frame(
            sock,
            framing.HELLO,
            {"workers": [d.to_interchange() for d in self.descriptors.values()]},
        )
        kind, body = self._recv_blocking(sock)
        if kind != framing.HELLO_OK:
            raise framing.FrameError(f"expected HELLO_OK, got {kind}")
        logger.info("worker %s connected as session %s", os.getpid(), body.get("session"))
        return sock

    def _recv_blocking(self, sock: socket.socket) -> tuple[str, dict]:
        while True:
            frame = framing.poll_frame(sock)
            if frame is not None:
                return frame
            if self.shutdown.is_set():
                raise framing.ConnectionClosed("shutting down")

    def run(self) -> None:
        """Serve until stop() is called. Returns after BYE."""
        backoff = BACKOFF_INITIAL
        while not self.shutdown.is_set():
            try:
                sock = self._connect()
            except (OSError, framing.FrameError, framing.ConnectionClosed):
                if self.shutdown.wait(backoff):
                    return
                backoff = min(backoff * 2, BACKOFF_CAP)
                continue
            backoff = BACKOFF_INITIAL
            self._sock = sock
            beat = threading.Thread(
                target=self._heartbeat_thread, args=(sock,), daemon=True
            )
            beat.start()
            try:
                self._serve(sock)
                # Clean shutdown: in-flight work is already finished.
                self._send(framing.BYE, {})
                return
            except (OSError, framing.ConnectionClosed, framing.FrameError):
                logger.warning("worker lost broker connection, will retry")
            finally:
                self._sock = None
                try:
                    sock.close()
                except OSError:
                    pass

    def _serve(self, sock: socket.socket) -> None:
        while True:
            frame = framing.poll_frame(sock)
            if frame is None:
                if self.shutdown.is_set():
                    return
                continue
            kind, body = frame
            if kind == framing.JOB:
                self._handle_job(body)
                if self.shutdown.is_set():
                    return
            elif kind == framing.BYE:
                raise framing.ConnectionClosed("broker said BYE")
            # Other kinds are ignored; the broker does not send them.

    def _handle_job(self, body: dict) -> None:
        job_id = body.get("job", "")
        name = body.get("worker", "")
        descriptor = self.descriptors.get(name)
        if descriptor is None:
            self._send(
                framing.ERROR,
                {"job": job_id, "message": f"worker {name!r} not served here"},
            )
            return
        try:
            work_input = input_from_job_body(descriptor, body)
            results = invoke(descriptor, self.registry.process_fn(name), work_input)
        except WorkerError as exc:
            self._send(framing.ERROR, {"job": job_id, "message": str(exc)})
            return
        except Exception as exc:  # malformed payload and similar
            self._send(
                framing.ERROR,
                {"job": job_id, "message": f"bad job payload: {exc}"},
            )
            return
        self._send(
            framing.RESULT,
            {"job": job_id, "results": {r.key: r.value for r in results}},
        )


def run_worker_loop(
    broker_address: Optional[str],
    registry: Registry,
    only: Optional[Sequence[str]] = None,
    heartbeat_interval: float = DEFAULT_HEARTBEAT_INTERVAL,
    shutdown: Optional[threading.Event] = None,
) -> None:
    """Blocking worker-side entry point; see WorkerLoop."""
    address = broker_address or os.environ.get(
        "TEXTPIPE_BROKER", DEFAULT_BROKER_ADDRESS
    )
    loop = WorkerLoop(
        address, registry, only=only, heartbeat_interval=heartbeat_interval
    )
    if shutdown is not None:
        loop.shutdown = shutdown
    loop.run()

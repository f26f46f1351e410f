"""Job router between the scheduler and worker processes.

Workers connect over TCP, announce their descriptors with HELLO, and then
serve one job at a time. The broker queues submitted jobs, assigns each to
the least-loaded idle session advertising that worker, requeues work from
dead or silent sessions, and reports results upward through callbacks. All
broker state is mutated under one lock; callbacks run outside it.
"""

from __future__ import annotations

import base64
import logging
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

from . import framing
from .model import Job
from .worker import Registry, WorkerDescriptor

logger = logging.getLogger(__name__)

DEFAULT_LISTEN = "127.0.0.1:7370"
DEFAULT_HEARTBEAT_INTERVAL = 2.0
DEFAULT_JOB_TIMEOUT = 60.0

QUEUED = "queued"
IN_FLIGHT = "in_flight"
COMPLETED = "completed"
DEAD = "dead"


class BrokerError(Exception):
    pass


class MissingRequirement(BrokerError):
    """A job was submitted before its required results were cached."""


@dataclass
class WorkerSession:
    """One connected worker process."""

    session_id: int
    descriptors: dict[str, WorkerDescriptor]
    address: str
    sender: Callable[[str, dict], None]
    closer: Callable[[], None]
    in_flight: Optional[str] = None
    last_heartbeat: float = field(default_factory=time.monotonic)
    completed: dict[str, int] = field(default_factory=dict)

    def completed_in_run(self, run_id: str) -> int:
        return self.completed.get(run_id, 0)


@dataclass
class JobTicket:
    job_id: str
    run_id: str
    worker_name: str
    body: dict
    state: str = QUEUED
    session_id: Optional[int] = None
    dispatched_at: Optional[float] = None


def dispatch(
    ready: Iterable[JobTicket], sessions: Iterable[WorkerSession]
) -> dict[str, WorkerSession]:
    """Assign queued jobs to idle sessions; jobs with no eligible session
    stay queued.

    Eligibility: the session is idle and advertises the job's worker name.
    Among eligible sessions the one with the fewest completed jobs in the
    job's run wins, ties falling to the lowest session id.
    """
    assignment: dict[str, WorkerSession] = {}
    taken: set[int] = set()
    for ticket in ready:
        candidates = [
            s
            for s in sessions
            if s.in_flight is None
            and s.session_id not in taken
            and ticket.worker_name in s.descriptors
        ]
        if not candidates:
            continue
        best = min(
            candidates,
            key=lambda s: (s.completed_in_run(ticket.run_id), s.session_id),
        )
        assignment[ticket.job_id] = best
        taken.add(best.session_id)
    return assignment


def build_job_payload(
    job: Job, store, registry: Registry, run_data: dict
) -> dict[str, Any]:
    """JOB frame body for a ready job: required results, raw bytes for
    extraction workers, and the run's data block."""
    descriptor = registry.get(job.worker_name)
    required: dict[str, Any] = {}
    for key in descriptor.requires:
        value = store.get_result(job.document, key)
        if value is None:
            raise MissingRequirement(
                f"job {job.id}: key {key!r} not cached for {job.document}"
            )
        required[key] = value
    body: dict[str, Any] = {
        "job": job.id,
        "worker": job.worker_name,
        "document": job.document,
        "required_results": required,
        "data": dict(run_data),
    }
    if descriptor.needs_raw:
        document = store.get_document(job.document)
        body["raw"] = base64.b64encode(document.raw).decode("ascii")
        body["declared_type"] = document.declared_type
    return body


class Broker:
    """Routes jobs to worker sessions over the framed TCP protocol."""

    def __init__(
        self,
        on_result: Callable[[str, dict], None],
        on_error: Callable[[str, str], None],
        on_dispatch: Optional[Callable[[str], None]] = None,
        heartbeat_interval: float = DEFAULT_HEARTBEAT_INTERVAL,
        job_timeout: float = DEFAULT_JOB_TIMEOUT,
        job_timeouts: Optional[dict[str, float]] = None,
    ):
        self.on_result = on_result
        self.on_error = on_error
        # Called under the broker lock just before a JOB frame is sent, so
        # state observers see "dispatched" before any result can race in.
        # Must be quick and must not call back into the broker.
        self.on_dispatch = on_dispatch
        self.heartbeat_interval = heartbeat_interval
        self.job_timeout = job_timeout
        self.job_timeouts = dict(job_timeouts or {})
        self._lock = threading.RLock()
        self._sessions: dict[int, WorkerSession] = {}
        self._tickets: dict[str, JobTicket] = {}
        self._queue: deque[str] = deque()
        self._next_session_id = 1
        self._server_sock: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []
        self._shutdown = threading.Event()

    # -- submission ------------------------------------------------------------

    def submit(self, job_id: str, run_id: str, worker_name: str, body: dict) -> None:
        """Queue one job for dispatch. Resubmitting a job id replaces its
        dead ticket (the retry path)."""
        callbacks: list[Callable[[], None]] = []
        with self._lock:
            self._tickets[job_id] = JobTicket(
                job_id=job_id, run_id=run_id, worker_name=worker_name, body=body
            )
            self._queue.append(job_id)
            self._pump(callbacks)
        self._run_callbacks(callbacks)

    def _pump(self, callbacks: list[Callable[[], None]]) -> None:
        """Assign queued tickets to idle sessions. Caller holds the lock."""
        if not self._queue:
            return
        queued = [
            self._tickets[jid]
            for jid in self._queue
            if self._tickets[jid].state == QUEUED
        ]
        assignment = dispatch(queued, self._sessions.values())
        if not assignment:
            return
        for job_id, session in assignment.items():
            ticket = self._tickets[job_id]
            ticket.state = IN_FLIGHT
            ticket.session_id = session.session_id
            ticket.dispatched_at = time.monotonic()
            session.in_flight = job_id
            if self.on_dispatch is not None:
                self.on_dispatch(job_id)
            try:
                session.sender(framing.JOB, ticket.body)
            except OSError:
                # The connection just died; the reaper path cleans up.
                logger.warning("send to session %s failed", session.session_id)
                self._drop_session(session, callbacks, "worker lost")
        self._queue = deque(
            jid for jid in self._queue if self._tickets[jid].state == QUEUED
        )

    def _run_callbacks(self, callbacks: list[Callable[[], None]]) -> None:
        for callback in callbacks:
            try:
                callback()
            except Exception:
                logger.exception("broker callback failed")

    # -- session management -------------------------------------------------------

    def attach_session(
        self,
        descriptors: Iterable[WorkerDescriptor],
        sender: Callable[[str, dict], None],
        closer: Callable[[], None] = lambda: None,
        address: str = "local",
        ready_hook: Optional[Callable[[int], None]] = None,
    ) -> int:
        """Register a worker session and pump the queue. The transport is
        abstract: tests attach in-process sessions, the TCP listener
        attaches socket-backed ones. `ready_hook` runs before any JOB can
        be sent; the TCP path uses it to put HELLO_OK on the wire first."""
        callbacks: list[Callable[[], None]] = []
        with self._lock:
            session_id = self._next_session_id
            self._next_session_id += 1
            session = WorkerSession(
                session_id=session_id,
                descriptors={d.name: d for d in descriptors},
                address=address,
                sender=sender,
                closer=closer,
            )
            self._sessions[session_id] = session
            if ready_hook is not None:
                ready_hook(session_id)
            self._pump(callbacks)
        self._run_callbacks(callbacks)
        logger.info("session %d attached (%s)", session_id, address)
        return session_id

    def detach_session(self, session_id: int, reason: str = "worker lost") -> None:
        callbacks: list[Callable[[], None]] = []
        with self._lock:
            session = self._sessions.get(session_id)
            if session is not None:
                self._drop_session(session, callbacks, reason)
        self._run_callbacks(callbacks)

    def _drop_session(
        self,
        session: WorkerSession,
        callbacks: list[Callable[[], None]],
        reason: str,
    ) -> None:
        self._sessions.pop(session.session_id, None)
        try:
            session.closer()
        except OSError:
            pass
        job_id = session.in_flight
        if job_id is not None:
            ticket = self._tickets.get(job_id)
            if ticket is not None and ticket.state == IN_FLIGHT:
                ticket.state = DEAD
                callbacks.append(lambda j=job_id, r=reason: self.on_error(j, r))

    # -- frame handling -------------------------------------------------------------

    def handle_frame(self, session_id: int, kind: str, body: dict) -> None:
        callbacks: list[Callable[[], None]] = []
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                return
            session.last_heartbeat = time.monotonic()
            if kind == framing.HEARTBEAT:
                pass
            elif kind == framing.RESULT:
                self._handle_result(session, body, callbacks)
            elif kind == framing.ERROR:
                self._handle_error(session, body, callbacks)
            elif kind == framing.BYE:
                self._drop_session(session, callbacks, "worker said goodbye")
            self._pump(callbacks)
        self._run_callbacks(callbacks)

    def _handle_result(
        self,
        session: WorkerSession,
        body: dict,
        callbacks: list[Callable[[], None]],
    ) -> None:
        job_id = body.get("job", "")
        results = body.get("results", {})
        ticket = self._tickets.get(job_id)
        if session.in_flight == job_id:
            session.in_flight = None
        if ticket is None or ticket.state in (COMPLETED, DEAD):
            # Duplicate or stale result: acknowledged by discarding.
            logger.info("discarding duplicate result for job %s", job_id)
            return
        ticket.state = COMPLETED
        session.completed[ticket.run_id] = session.completed_in_run(ticket.run_id) + 1
        callbacks.append(lambda j=job_id, r=results: self.on_result(j, r))

    def _handle_error(
        self,
        session: WorkerSession,
        body: dict,
        callbacks: list[Callable[[], None]],
    ) -> None:
        job_id = body.get("job", "")
        message = str(body.get("message", "worker error"))
        ticket = self._tickets.get(job_id)
        if session.in_flight == job_id:
            session.in_flight = None
        if ticket is None or ticket.state in (COMPLETED, DEAD):
            return
        ticket.state = DEAD
        callbacks.append(lambda j=job_id, m=message: self.on_error(j, m))

    # -- liveness ------------------------------------------------------------------

    def reap(self, now: Optional[float] = None) -> list[str]:
        """Drop sessions with stale heartbeats and requeue overdue jobs.

        Returns the job ids sent back for retry.
        """
        now = time.monotonic() if now is None else now
        callbacks: list[Callable[[], None]] = []
        requeued: list[str] = []
        with self._lock:
            stale_cutoff = 3 * self.heartbeat_interval
            for session in list(self._sessions.values()):
                overdue_job = False
                job_id = session.in_flight
                if job_id is not None:
                    ticket = self._tickets.get(job_id)
                    if ticket is not None and ticket.state == IN_FLIGHT:
                        limit = self.job_timeouts.get(
                            ticket.worker_name, self.job_timeout
                        )
                        overdue_job = (
                            ticket.dispatched_at is not None
                            and now - ticket.dispatched_at > limit
                        )
                stale = now - session.last_heartbeat > stale_cutoff
                if stale or overdue_job:
                    reason = "job timeout" if overdue_job else "worker lost"
                    if job_id is not None:
                        requeued.append(job_id)
                    logger.warning(
                        "reaping session %d (%s)", session.session_id, reason
                    )
                    self._drop_session(session, callbacks, reason)
            self._pump(callbacks)
        self._run_callbacks(callbacks)
        return requeued

    # -- introspection ---------------------------------------------------------------

    def session_counts(self, run_id: str) -> dict[int, int]:
        with self._lock:
            return {
                s.session_id: s.completed_in_run(run_id)
                for s in self._sessions.values()
            }

    def idle_session_count(self, worker_name: Optional[str] = None) -> int:
        with self._lock:
            return sum(
                1
                for s in self._sessions.values()
                if s.in_flight is None
                and (worker_name is None or worker_name in s.descriptors)
            )

    # -- TCP transport ----------------------------------------------------------------

    def start(self, listen: str = DEFAULT_LISTEN) -> tuple[str, int]:
        """Bind, start the accept loop and the reaper; returns the bound
        address (useful with port 0)."""
        host, _, port = listen.rpartition(":")
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host or "127.0.0.1", int(port)))
        server.listen(64)
        server.settimeout(0.2)
        self._server_sock = server
        acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        acceptor.start()
        reaper = threading.Thread(target=self._reap_loop, daemon=True)
        reaper.start()
        self._threads += [acceptor, reaper]
        bound = server.getsockname()
        logger.info("broker listening on %s:%d", bound[0], bound[1])
        return bound

    def stop(self) -> None:
        self._shutdown.set()
        if self._server_sock is not None:
            try:
                self._server_sock.close()
            except OSError:
                pass
        with self._lock:
            sessions = list(self._sessions.values())
        for session in sessions:
            try:
                session.sender(framing.BYE, {})
            except OSError:
                pass
            self.detach_session(session.session_id, "broker shutdown")
        for thread in self._threads:
            thread.join(timeout=2)

    def _reap_loop(self) -> None:
        interval = max(self.heartbeat_interval / 2, 0.05)
        while not self._shutdown.wait(interval):
            self.reap()

    def _accept_loop(self) -> None:
        while not self._shutdown.is_set():
            try:
                conn, addr = self._server_sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            thread = threading.Thread(
                target=self._serve_connection,
                args=(conn, f"{addr[0]}:{addr[1]}"),
                daemon=True,
            )
            thread.start()

    def _serve_connection(self, conn: socket.socket, address: str) -> None:
        session_id: Optional[int] = None
        send_lock = threading.Lock()

        def sender(kind: str, body: dict) -> None:
            with send_lock:
                framing.send_frame(conn, kind, body)

        def closer() -> None:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()

        try:
            conn.settimeout(30.0)
            kind, body = framing.recv_frame(conn)
            if kind != framing.HELLO:
                logger.warning("%s: first frame was %s, dropping", address, kind)
                conn.close()
                return
            descriptors = [
                WorkerDescriptor.from_interchange(item)
                for item in body.get("workers", [])
            ]
            session_id = self.attach_session(
                descriptors,
                sender,
                closer,
                address=address,
                ready_hook=lambda sid: sender(
                    framing.HELLO_OK, {"session": sid}
                ),
            )
            conn.settimeout(None)
            while not self._shutdown.is_set():
                kind, body = framing.recv_frame(conn)
                self.handle_frame(session_id, kind, body)
                if kind == framing.BYE:
                    return
        except (framing.ConnectionClosed, framing.FrameError, OSError):
            pass
        finally:
            if session_id is not None:
                self.detach_session(session_id, "worker lost")
            try:
                conn.close()
            except OSError:
                pass

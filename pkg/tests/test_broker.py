import base64

import pytest

from textpipe.broker import (
    Broker,
    JobTicket,
    MissingRequirement,
    WorkerSession,
    build_job_payload,
    dispatch,
)
from textpipe.model import AnalysisResult, Job, new_document, new_id, now_utc
from textpipe.nlp import default_registry
from textpipe.store import DocumentStore
from textpipe.worker import WorkerDescriptor


def make_session(session_id, workers, completed=None, in_flight=None):
    return WorkerSession(
        session_id=session_id,
        descriptors={
            name: WorkerDescriptor(
                name=name, version="1", produces=frozenset({name})
            )
            for name in workers
        },
        address="test",
        sender=lambda kind, body: None,
        closer=lambda: None,
        in_flight=in_flight,
        completed=dict(completed or {}),
    )


def tickets(count, worker="freqdist", run="r1"):
    return [
        JobTicket(job_id=f"j{i}", run_id=run, worker_name=worker, body={})
        for i in range(count)
    ]


class TestDispatch:
    def test_idleness_constraint(self):
        sessions = [make_session(1, ["freqdist"]), make_session(2, ["freqdist"])]
        ready = tickets(3)
        assignment = dispatch(ready, sessions)
        assert len(assignment) == 2
        assert set(assignment) == {"j0", "j1"}

    def test_least_loaded_wins(self):
        sessions = [
            make_session(1, ["freqdist"], completed={"r1": 5}),
            make_session(2, ["freqdist"], completed={"r1": 2}),
        ]
        assignment = dispatch(tickets(1), sessions)
        assert assignment["j0"].session_id == 2

    def test_tie_breaks_to_lowest_session_id(self):
        sessions = [
            make_session(7, ["freqdist"]),
            make_session(3, ["freqdist"]),
        ]
        assignment = dispatch(tickets(1), sessions)
        assert assignment["j0"].session_id == 3

    def test_no_misrouting(self):
        sessions = [make_session(1, ["other"])]
        assert dispatch(tickets(2), sessions) == {}

    def test_busy_sessions_skipped(self):
        sessions = [make_session(1, ["freqdist"], in_flight="old")]
        assert dispatch(tickets(1), sessions) == {}

    def test_counts_are_per_run(self):
        sessions = [
            make_session(1, ["freqdist"], completed={"other_run": 50}),
            make_session(2, ["freqdist"], completed={"r1": 1}),
        ]
        assignment = dispatch(tickets(1), sessions)
        assert assignment["j0"].session_id == 1


class TestBuildJobPayload:
    @pytest.fixture
    def seeded(self, tmp_path):
        store = DocumentStore(tmp_path / "data")
        registry = default_registry()
        corpus = store.create_corpus("c", "a")
        doc = new_document(b"Dogs bark.", "a.txt", corpus.id, "text/plain")
        store.put_document(doc)
        yield store, registry, doc
        store.close()

    def put(self, store, doc_id, key, value):
        store.put_result(
            AnalysisResult(
                document=doc_id,
                key=key,
                value=value,
                producer_name="t",
                producer_version="1.0.0",
                produced_at=now_utc(),
            )
        )

    def job(self, doc_id, worker):
        return Job(
            id=new_id(), run=new_id(), worker_name=worker, document=doc_id
        )

    def test_freqdist_payload_carries_exactly_requires(self, seeded):
        store, registry, doc = seeded
        self.put(store, doc.id, "tokens", ["Dogs", "bark", "."])
        self.put(store, doc.id, "language", "en")
        self.put(store, doc.id, "text", "Dogs bark.")
        body = build_job_payload(
            self.job(doc.id, "freqdist"), store, registry, {"foo": 1}
        )
        assert set(body["required_results"]) == {"tokens", "language"}
        assert "raw" not in body
        assert body["data"] == {"foo": 1}
        assert body["worker"] == "freqdist"

    def test_extractor_payload_carries_raw(self, seeded):
        store, registry, doc = seeded
        body = build_job_payload(
            self.job(doc.id, "extractor"), store, registry, {}
        )
        assert base64.b64decode(body["raw"]) == b"Dogs bark."
        assert body["required_results"] == {}
        assert body["declared_type"] == "text/plain"

    def test_missing_requirement_guard(self, seeded):
        store, registry, doc = seeded
        with pytest.raises(MissingRequirement):
            build_job_payload(self.job(doc.id, "freqdist"), store, registry, {})


class FakeTransport:
    """Collects frames the broker sends to a session."""

    def __init__(self):
        self.frames = []

    def sender(self, kind, body):
        self.frames.append((kind, body))

    def job_ids(self):
        return [b["job"] for k, b in self.frames if k == "JOB"]


def make_broker(events, **kwargs):
    return Broker(
        on_result=lambda job, results: events.append(("result", job, results)),
        on_error=lambda job, message: events.append(("error", job, message)),
        **kwargs,
    )


def attach(broker, transport, workers=("w",)):
    return broker.attach_session(
        [
            WorkerDescriptor(name=n, version="1", produces=frozenset({n}))
            for n in workers
        ],
        transport.sender,
    )


class TestBrokerStateMachine:
    def test_submit_then_attach_dispatches(self):
        events = []
        broker = make_broker(events)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        transport = FakeTransport()
        attach(broker, transport)
        assert transport.job_ids() == ["j1"]

    def test_result_flows_to_callback_and_frees_session(self):
        events = []
        broker = make_broker(events)
        transport = FakeTransport()
        sid = attach(broker, transport)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        broker.submit("j2", "r1", "w", {"job": "j2"})
        assert transport.job_ids() == ["j1"]
        broker.handle_frame(sid, "RESULT", {"job": "j1", "results": {"w": 1}})
        assert events == [("result", "j1", {"w": 1})]
        assert transport.job_ids() == ["j1", "j2"]

    def test_duplicate_result_discarded(self):
        events = []
        broker = make_broker(events)
        transport = FakeTransport()
        sid = attach(broker, transport)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        broker.handle_frame(sid, "RESULT", {"job": "j1", "results": {"w": 1}})
        broker.handle_frame(sid, "RESULT", {"job": "j1", "results": {"w": 1}})
        assert len([e for e in events if e[0] == "result"]) == 1

    def test_error_frame_reports_upward(self):
        events = []
        broker = make_broker(events)
        transport = FakeTransport()
        sid = attach(broker, transport)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        broker.handle_frame(sid, "ERROR", {"job": "j1", "message": "nope"})
        assert events == [("error", "j1", "nope")]

    def test_unknown_result_ignored(self):
        events = []
        broker = make_broker(events)
        transport = FakeTransport()
        sid = attach(broker, transport)
        broker.handle_frame(sid, "RESULT", {"job": "ghost", "results": {}})
        assert events == []

    def test_bye_requeues_in_flight(self):
        events = []
        broker = make_broker(events)
        transport = FakeTransport()
        sid = attach(broker, transport)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        broker.handle_frame(sid, "BYE", {})
        assert ("error", "j1", "worker said goodbye") in events


class TestReap:
    def test_heartbeats_flowing_reap_empty(self):
        events = []
        broker = make_broker(events, heartbeat_interval=0.1)
        transport = FakeTransport()
        sid = attach(broker, transport)
        broker.handle_frame(sid, "HEARTBEAT", {})
        assert broker.reap() == []

    def test_stale_session_dropped_and_job_requeued(self):
        import time

        events = []
        broker = make_broker(events, heartbeat_interval=0.1)
        transport = FakeTransport()
        sid = attach(broker, transport)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        requeued = broker.reap(now=time.monotonic() + 1.0)
        assert requeued == ["j1"]
        assert ("error", "j1", "worker lost") in events
        assert broker.idle_session_count() == 0

    def test_job_timeout_requeues_and_drops_session(self):
        import time

        events = []
        broker = make_broker(events, heartbeat_interval=100.0, job_timeout=0.5)
        transport = FakeTransport()
        sid = attach(broker, transport)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        broker.handle_frame(sid, "HEARTBEAT", {})
        requeued = broker.reap(now=time.monotonic() + 10.0)
        assert requeued == ["j1"]
        assert ("error", "j1", "job timeout") in events

    def test_resubmitted_job_redispatches(self):
        import time

        events = []
        broker = make_broker(events, heartbeat_interval=0.1)
        first = FakeTransport()
        attach(broker, first)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        broker.reap(now=time.monotonic() + 1.0)
        second = FakeTransport()
        sid2 = attach(broker, second)
        broker.submit("j1", "r1", "w", {"job": "j1"})  # retry path
        assert second.job_ids() == ["j1"]
        broker.handle_frame(sid2, "RESULT", {"job": "j1", "results": {"w": 2}})
        assert ("result", "j1", {"w": 2}) in events

    def test_late_result_after_requeue_wins_once(self):
        import time

        events = []
        broker = make_broker(events, heartbeat_interval=0.1)
        first = FakeTransport()
        sid1 = attach(broker, first)
        broker.submit("j1", "r1", "w", {"job": "j1"})
        broker.reap(now=time.monotonic() + 1.0)  # j1 now dead
        # the "dead" worker answers anyway: ignored, its ticket is dead
        broker.handle_frame(sid1, "RESULT", {"job": "j1", "results": {"w": 1}})
        results = [e for e in events if e[0] == "result"]
        assert results == []


class TestBalanceSimulation:
    def test_hundred_jobs_four_workers_within_one(self):
        events = []
        broker = make_broker(events)
        transports = {}
        for i in range(4):
            transport = FakeTransport()
            sid = attach(broker, transport)
            transports[sid] = transport
        for i in range(100):
            broker.submit(f"job{i:03d}", "r1", "w", {"job": f"job{i:03d}"})
        # deterministic service: every round, each busy session completes
        for _ in range(200):
            progressed = False
            for sid in sorted(transports):
                transport = transports[sid]
                done = {b["job"] for k, b in transport.frames if k == "JOB"}
                answered = {e[1] for e in events if e[0] == "result"}
                for job_id in sorted(done - answered):
                    broker.handle_frame(
                        sid, "RESULT", {"job": job_id, "results": {"w": 1}}
                    )
                    progressed = True
                    break  # one completion per session per round
            if not progressed:
                break
        counts = broker.session_counts("r1")
        assert sum(counts.values()) == 100
        assert max(counts.values()) - min(counts.values()) <= 1

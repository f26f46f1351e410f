import threading

import pytest

from textpipe.nlp import BUILTIN_WORKERS
from textpipe.service import PlatformNode
from textpipe.worker import input_from_job_body, invoke


@pytest.fixture
def node(tmp_path):
    platform = PlatformNode(tmp_path / "data")
    yield platform
    platform.close()


class InlineWorkers:
    """Broker session that executes jobs synchronously inside the send path.

    Gives tests a fully deterministic pipeline: by the time an upload or
    submission returns, every reachable job has already completed.
    """

    def __init__(self, broker, workers=BUILTIN_WORKERS):
        self.broker = broker
        self.procs = {d.name: (d, p) for d, p in workers}
        self.executed: list[str] = []
        self.session_id = broker.attach_session(
            [d for d, _ in workers], self._on_frame
        )

    def _on_frame(self, kind, body):
        if kind != "JOB":
            return
        descriptor, process = self.procs[body["worker"]]
        self.executed.append(body["worker"])
        try:
            results = invoke(
                descriptor, process, input_from_job_body(descriptor, body)
            )
        except Exception as exc:
            self.broker.handle_frame(
                self.session_id,
                "ERROR",
                {"job": body["job"], "message": str(exc)},
            )
            return
        self.broker.handle_frame(
            self.session_id,
            "RESULT",
            {"job": body["job"], "results": {r.key: r.value for r in results}},
        )


@pytest.fixture
def inline_node(tmp_path):
    platform = PlatformNode(tmp_path / "data")
    InlineWorkers(platform.broker)
    yield platform
    platform.close()


def wait_until(predicate, timeout=10.0, interval=0.02):
    deadline = threading.Event()
    import time

    end = time.monotonic() + timeout
    while time.monotonic() < end:
        if predicate():
            return True
        deadline.wait(interval)
    return predicate()

"""The platform node: wires store, registry, scheduler, broker and index.

One node owns one data directory. Uploads trigger the built-in preprocessing
pipeline; pipeline submissions become runs; worker results flow back through
the broker callbacks, are cached in the store, applied to the full-text
index when they carry postings, and unlock downstream jobs.

Lock order is broker -> scheduler/store; scheduler methods never call into
the broker.
"""

from __future__ import annotations

import base64
import logging
import threading
from typing import Any, Optional

from .broker import Broker, build_job_payload
from .index import InvertedIndex, rebuild_from_store
from .model import (
    AnalysisResult,
    Document,
    PipelineSpec,
    new_document,
    now_utc,
)
from .nlp import default_registry
from .scheduler import Dag, RunState, Scheduler, build_dag, builtin_pipeline
from .store import DocumentStore
from .worker import Registry

logger = logging.getLogger(__name__)


class PlatformError(Exception):
    pass


class UnsupportedType(PlatformError):
    """Upload declared a media type the extractor cannot handle."""


ACCEPTED_TYPES = {None, "text/plain", "text/html"}


class PlatformNode:
    def __init__(
        self,
        data_dir,
        registry: Optional[Registry] = None,
        heartbeat_interval: float = 2.0,
        job_timeout: float = 60.0,
        retry_budget: int = 3,
    ):
        self.store = DocumentStore(data_dir)
        self.registry = registry if registry is not None else default_registry()
        self.index = InvertedIndex(self.store.index_dir / "index.json")
        self.scheduler = Scheduler(self.store, self.registry, retry_budget)
        self.broker = Broker(
            on_result=self._on_result,
            on_error=self._on_error,
            on_dispatch=self._on_dispatch,
            heartbeat_interval=heartbeat_interval,
            job_timeout=job_timeout,
        )

    def start_broker(self, listen: str) -> tuple[str, int]:
        return self.broker.start(listen)

    def close(self) -> None:
        self.broker.stop()
        self.store.close()

    # -- ingestion ---------------------------------------------------------------

    def create_corpus(self, name: str, owner: str):
        return self.store.create_corpus(name, owner)

    def upload_document(
        self,
        corpus_id: str,
        filename: str,
        raw: bytes,
        declared_type: Optional[str] = None,
    ) -> tuple[Document, RunState]:
        """Store a document and start the built-in pipeline over it."""
        if declared_type not in ACCEPTED_TYPES:
            raise UnsupportedType(
                f"cannot analyze documents of type {declared_type!r}"
            )
        document = new_document(raw, filename, corpus_id, declared_type)
        self.store.put_document(document)
        run = self.start_run(
            builtin_pipeline(self.registry), [document.id], data={}
        )
        return document, run

    def submit_pipeline(self, spec: PipelineSpec) -> RunState:
        dag = build_dag(spec, self.registry)
        if isinstance(spec.target, (list, tuple)):
            documents = [str(d) for d in spec.target]
            for doc_id in documents:
                self.store.get_document(doc_id)  # raises NotFound
        else:
            documents = self.store.list_corpus(str(spec.target))
        return self.start_run(dag, documents, data=spec.data)

    def start_run(self, dag: Dag, documents, data: dict) -> RunState:
        run = self.scheduler.create_run(dag, documents, data)
        self._persist_run(run)
        self._submit_ready(run)
        return run

    # -- scheduling glue ------------------------------------------------------------

    def _submit_ready(self, run: RunState) -> None:
        for job in self.scheduler.ready_jobs(run):
            self._submit_job(run, job)

    def _submit_job(self, run: RunState, job) -> None:
        payload = build_job_payload(job, self.store, self.registry, run.data)
        self.broker.submit(job.id, run.run, job.worker_name, payload)

    def _on_dispatch(self, job_id: str) -> None:
        self.scheduler.mark_dispatched(job_id)

    def _on_result(self, job_id: str, results: dict[str, Any]) -> None:
        entry = self.scheduler.find_job(job_id)
        if entry is None:
            logger.warning("result for unknown job %s discarded", job_id)
            return
        run, job = entry
        descriptor = self.registry.get(job.worker_name)
        undeclared = set(results) - set(descriptor.produces)
        if undeclared or not results:
            self._on_error(
                job_id, f"undeclared or empty output keys: {sorted(undeclared)}"
            )
            return
        produced_at = now_utc()
        try:
            for key, value in results.items():
                self.store.put_result(
                    AnalysisResult(
                        document=job.document,
                        key=key,
                        value=value,
                        producer_name=descriptor.name,
                        producer_version=descriptor.version,
                        produced_at=produced_at,
                    )
                )
                if key == "indexed":
                    self._apply_index_result(job.document, value)
        except Exception as exc:
            # A result the store refuses must not strand the job in
            # dispatched state; send it down the normal retry path.
            logger.warning("job %s returned an unstorable result: %s", job_id, exc)
            self._after_outcome(run, job_id, ok=False, error=f"unstorable result: {exc}")
            return
        self._after_outcome(run, job_id, ok=True)

    def _on_error(self, job_id: str, message: str) -> None:
        entry = self.scheduler.find_job(job_id)
        if entry is None:
            logger.warning("error for unknown job %s discarded", job_id)
            return
        run, _ = entry
        self._after_outcome(run, job_id, ok=False, error=message)

    def _after_outcome(
        self, run: RunState, job_id: str, ok: bool, error: Optional[str] = None
    ) -> None:
        to_submit = self.scheduler.on_job_outcome(job_id, ok, error)
        for job in to_submit:
            self._submit_job(run, job)
        self._persist_run(run)
        if run.finished:
            logger.info("run %s finished", run.run)

    def _apply_index_result(self, document_id: str, value: Any) -> None:
        if not isinstance(value, dict) or "postings" not in value:
            logger.warning("malformed index postings for %s", document_id)
            return
        doc = self.store.get_document(document_id)
        self.index.apply_postings(
            document_id,
            value["postings"],
            token_count=int(value.get("token_count", 0)),
            corpus=doc.corpus,
            seq=self.store.document_seq(document_id),
        )

    def _persist_run(self, run: RunState) -> None:
        self.store.put_run(run.run, self.scheduler.run_report(run))

    # -- queries -----------------------------------------------------------------

    def run_report(self, run_id: str) -> dict:
        run = self.scheduler.get_run(run_id)
        if run is not None:
            return self.scheduler.run_report(run)
        return self.store.get_run(run_id)

    def result_state(self, document_id: str, key: str) -> tuple[str, Any]:
        """("ready", value), ("pending", job state) or ("absent", None)."""
        value = self.store.get_result(document_id, key)
        if value is not None:
            return "ready", value
        active = self.scheduler.document_job_states(document_id)
        for worker_name in self.registry.producers_of(key):
            if worker_name in active:
                return "pending", active[worker_name]
        return "absent", None

    def search(self, terms, corpus: Optional[str] = None):
        return self.index.search(terms, corpus=corpus)

    def concordance(self, term: str, width: int, corpus: Optional[str] = None):
        return self.index.concordance(
            term,
            width,
            tokens_lookup=lambda d: self.store.get_result(d, "tokens"),
            corpus=corpus,
        )

    def reindex(self) -> int:
        return rebuild_from_store(self.index, self.store)

"""Pipeline validation and job scheduling.

A pipeline spec becomes a DAG of worker names. Per document, the DAG is
expanded so every required analysis key is either cached already or
produced by an ancestor node, then turned into per-document jobs whose
readiness is driven by stored results. The scheduler is a single state
machine guarded by one lock; readers get snapshots.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Optional

from .model import (
    DISPATCHED,
    DONE,
    FAILED,
    PENDING,
    READY,
    Job,
    PipelineSpec,
    format_timestamp,
    new_id,
    now_utc,
)
from .worker import Registry

logger = logging.getLogger(__name__)

DEFAULT_RETRY_BUDGET = 3

UPSTREAM_FAILURE = "upstream failure"

# The fixed preprocessing pipeline applied to every new document. Nodes are
# included only when registered; the first three are mandatory.
ESSENTIAL_BUILTINS = ("extractor", "tokenizer", "langdetect")
BUILTIN_EDGES = (
    ("extractor", "langdetect"),
    ("extractor", "tokenizer"),
    ("tokenizer", "freqdist"),
    ("tokenizer", "ngrams"),
    ("tokenizer", "statistics"),
    ("tokenizer", "indexer"),
    ("tokenizer", "pos"),
    ("langdetect", "pos"),
    ("langdetect", "freqdist"),
)


class SchedulerError(Exception):
    pass


class UnknownWorker(SchedulerError):
    def __init__(self, name: str):
        super().__init__(f"unknown worker {name!r}")
        self.name = name


class CycleDetected(SchedulerError):
    def __init__(self, cycle: list[str]):
        super().__init__("cycle: " + " -> ".join(cycle))
        self.cycle = cycle


class EmptySpec(SchedulerError):
    pass


class UnsatisfiedRequirement(SchedulerError):
    def __init__(self, worker: str, key: str):
        super().__init__(f"worker {worker!r} needs {key!r} but nothing produces it")
        self.worker = worker
        self.key = key


class AmbiguousProducer(SchedulerError):
    def __init__(self, key: str, candidates: list[str]):
        super().__init__(f"key {key!r} has several producers: {candidates}")
        self.key = key
        self.candidates = candidates


class UnknownJob(SchedulerError):
    pass


@dataclass(frozen=True)
class Dag:
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]

    def __post_init__(self):
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise SchedulerError(f"edge ({a}, {b}) leaves the node set")
        cycle = find_cycle(self.nodes, self.edges)
        if cycle is not None:
            raise CycleDetected(cycle)

    @property
    def entry_nodes(self) -> frozenset[str]:
        targets = {b for _, b in self.edges}
        return frozenset(self.nodes - targets)

    def parents(self, node: str) -> set[str]:
        return {a for a, b in self.edges if b == node}

    def children(self, node: str) -> set[str]:
        return {b for a, b in self.edges if a == node}

    def ancestors(self, node: str) -> set[str]:
        found: set[str] = set()
        frontier = self.parents(node)
        while frontier:
            found |= frontier
            frontier = {
                a for n in frontier for a in self.parents(n)
            } - found
        return found

    def descendants(self, node: str) -> set[str]:
        found: set[str] = set()
        frontier = self.children(node)
        while frontier:
            found |= frontier
            frontier = {
                b for n in frontier for b in self.children(n)
            } - found
        return found

    def topological_order(self) -> list[str]:
        """Deterministic Kahn order (lexicographic tie-break)."""
        indegree = {n: 0 for n in self.nodes}
        for _, b in self.edges:
            indegree[b] += 1
        available = sorted(n for n, d in indegree.items() if d == 0)
        order = []
        while available:
            node = available.pop(0)
            order.append(node)
            for child in sorted(self.children(node)):
                indegree[child] -= 1
                if indegree[child] == 0:
                    available.append(child)
            available.sort()
        return order


def find_cycle(
    nodes: Iterable[str], edges: Iterable[tuple[str, str]]
) -> Optional[list[str]]:
    """Return one cycle's node sequence (first node repeated at the end),
    or None if the graph is acyclic."""
    children: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        children.setdefault(a, []).append(b)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in children}
    path: list[str] = []

    def visit(node: str) -> Optional[list[str]]:
        color[node] = GRAY
        path.append(node)
        for child in sorted(children.get(node, [])):
            if color.get(child, WHITE) == GRAY:
                start = path.index(child)
                return path[start:] + [child]
            if color.get(child, WHITE) == WHITE:
                found = visit(child)
                if found is not None:
                    return found
        path.pop()
        color[node] = BLACK
        return None

    for node in sorted(children):
        if color[node] == WHITE:
            found = visit(node)
            if found is not None:
                return found
            path.clear()
    return None


def build_dag(spec: PipelineSpec, registry: Registry) -> Dag:
    """Validate a pipeline spec into a DAG.

    Nodes are every worker name appearing in the pipes plus declared entry
    workers; edges are deduplicated; unknown workers and cycles are
    rejected.
    """
    names = {n for edge in spec.pipes for n in edge} | set(spec.workers)
    if not names:
        raise EmptySpec("pipeline has no pipes and no entry workers")
    for name in sorted(names):
        if not registry.has(name):
            raise UnknownWorker(name)
    return Dag(nodes=frozenset(names), edges=frozenset(spec.pipes))


def builtin_pipeline(registry: Registry) -> Dag:
    """The preprocessing DAG applied to every uploaded document."""
    for name in ESSENTIAL_BUILTINS:
        if not registry.has(name):
            raise UnknownWorker(name)
    nodes = {
        name
        for edge in BUILTIN_EDGES
        for name in edge
        if registry.has(name)
    }
    edges = {
        (a, b) for a, b in BUILTIN_EDGES if a in nodes and b in nodes
    }
    return Dag(nodes=frozenset(nodes), edges=frozenset(edges))


def expand_requirements(
    dag: Dag, registry: Registry, store, document: str
) -> Dag:
    """Insert producer workers for keys a document's run still needs.

    For each node requirement K with no cached (document, K) result and no
    ancestor producing K, the unique registered producer of K is inserted
    as a new ancestor, recursively to a fixed point. Several candidate
    producers make K ambiguous; none make it unsatisfiable.
    """
    nodes = set(dag.nodes)
    edges = set(dag.edges)

    def ancestors(node: str) -> set[str]:
        found: set[str] = set()
        frontier = {a for a, b in edges if b == node}
        while frontier:
            found |= frontier
            frontier = {
                a for n in found for a, b in edges if b == n
            } - found
        return found

    worklist = sorted(nodes)
    while worklist:
        node = worklist.pop(0)
        descriptor = registry.get(node)
        for key in descriptor.requires:
            produced_upstream = any(
                key in registry.get(a).produces for a in ancestors(node)
            )
            if produced_upstream:
                continue
            if store.get_result(document, key) is not None:
                continue
            candidates = registry.producers_of(key)
            if not candidates:
                raise UnsatisfiedRequirement(node, key)
            if len(candidates) > 1:
                raise AmbiguousProducer(key, candidates)
            producer = candidates[0]
            if producer not in nodes:
                nodes.add(producer)
                worklist.append(producer)
            edges.add((producer, node))
    return Dag(nodes=frozenset(nodes), edges=frozenset(edges))


# ---------------------------------------------------------------------------
# Run state
# ---------------------------------------------------------------------------

@dataclass
class RunState:
    run: str
    dag: Dag
    documents: list[str]
    data: dict
    expanded: dict[str, Dag]  # per-document DAG after requirement expansion
    jobs: dict[tuple[str, str], Job]  # (document, worker) -> job
    started_at: datetime
    finished_at: Optional[datetime] = None
    dispatch_trace: list[tuple[str, str]] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return self.finished_at is not None

    def job_by_id(self, job_id: str) -> Optional[Job]:
        for job in self.jobs.values():
            if job.id == job_id:
                return job
        return None


class Scheduler:
    """Owns run states and the job state machine."""

    def __init__(
        self,
        store,
        registry: Registry,
        retry_budget: int = DEFAULT_RETRY_BUDGET,
    ):
        self.store = store
        self.registry = registry
        self.retry_budget = retry_budget
        self._lock = threading.RLock()
        self._runs: dict[str, RunState] = {}
        self._jobs_by_id: dict[str, tuple[RunState, Job]] = {}

    # -- run lifecycle ---------------------------------------------------------

    def create_run(
        self,
        dag: Dag,
        documents: Iterable[str],
        data: Optional[dict] = None,
    ) -> RunState:
        """Expand the DAG per document and build the job table.

        Jobs whose worker's produced keys are all cached at the worker's
        current version are recorded as done immediately and never
        dispatched.
        """
        run_id = new_id()
        docs = list(documents)
        expanded: dict[str, Dag] = {}
        jobs: dict[tuple[str, str], Job] = {}
        with self._lock:
            for doc in docs:
                doc_dag = expand_requirements(dag, self.registry, self.store, doc)
                expanded[doc] = doc_dag
                for node in doc_dag.nodes:
                    descriptor = self.registry.get(node)
                    cached = all(
                        self.store.has_result(doc, key, descriptor.version)
                        for key in descriptor.produces
                    )
                    state = DONE if cached else PENDING
                    jobs[(doc, node)] = Job(
                        id=new_id(),
                        run=run_id,
                        worker_name=node,
                        document=doc,
                        state=state,
                    )
            run = RunState(
                run=run_id,
                dag=dag,
                documents=docs,
                data=dict(data or {}),
                expanded=expanded,
                jobs=jobs,
                started_at=now_utc(),
            )
            self._runs[run_id] = run
            for job in jobs.values():
                self._jobs_by_id[job.id] = (run, job)
            self._check_finished(run)
            return run

    def get_run(self, run_id: str) -> Optional[RunState]:
        with self._lock:
            return self._runs.get(run_id)

    # -- readiness ---------------------------------------------------------------

    def _job_ready(self, run: RunState, job: Job) -> bool:
        if job.state != PENDING:
            return False
        doc_dag = run.expanded[job.document]
        descriptor = self.registry.get(job.worker_name)
        ancestor_names = doc_dag.ancestors(job.worker_name)
        for key in descriptor.requires:
            producers = [
                a
                for a in ancestor_names
                if key in self.registry.get(a).produces
            ]
            if producers:
                if not all(
                    run.jobs[(job.document, a)].state == DONE for a in producers
                ):
                    return False
            elif self.store.get_result(job.document, key) is None:
                return False
        return True

    def ready_jobs(self, run: RunState) -> list[Job]:
        """Pending jobs whose requirements are satisfied; marks them ready."""
        with self._lock:
            newly_ready = []
            for job in run.jobs.values():
                if self._job_ready(run, job):
                    job.transition_to(READY)
                    newly_ready.append(job)
            newly_ready.sort(key=lambda j: (j.document, j.worker_name))
            return newly_ready

    def mark_dispatched(self, job_id: str) -> None:
        with self._lock:
            entry = self._jobs_by_id.get(job_id)
            if entry is None:
                raise UnknownJob(job_id)
            run, job = entry
            job.transition_to(DISPATCHED)
            run.dispatch_trace.append((job.document, job.worker_name))

    def find_job(self, job_id: str) -> Optional[tuple[RunState, Job]]:
        with self._lock:
            return self._jobs_by_id.get(job_id)

    # -- outcomes -----------------------------------------------------------------

    def on_job_outcome(
        self, job_id: str, ok: bool, error: Optional[str] = None
    ) -> list[Job]:
        """Apply a job outcome; returns jobs that became ready because of it.

        Success marks the job done. Failure increments attempts and either
        requeues (below the retry budget) or fails the job terminally,
        failing every descendant with it.
        """
        with self._lock:
            entry = self._jobs_by_id.get(job_id)
            if entry is None:
                raise UnknownJob(job_id)
            run, job = entry
            if job.state != DISPATCHED:
                # Late or duplicate outcome for a job that was already
                # completed, requeued or cancelled; the live path wins.
                return []
            if ok:
                job.transition_to(DONE)
            else:
                job.note_attempt()
                job.last_error = error or "worker error"
                if job.attempts < self.retry_budget:
                    job.transition_to(READY)
                    self._check_finished(run)
                    return [job]
                job.transition_to(FAILED)
                self._fail_descendants(run, job)
            newly_ready = self.ready_jobs(run)
            self._check_finished(run)
            return newly_ready

    def _fail_descendants(self, run: RunState, job: Job) -> None:
        doc_dag = run.expanded[job.document]
        for name in doc_dag.descendants(job.worker_name):
            downstream = run.jobs[(job.document, name)]
            if not downstream.terminal:
                downstream.last_error = UPSTREAM_FAILURE
                downstream.transition_to(FAILED)

    def _check_finished(self, run: RunState) -> None:
        if run.finished_at is None and all(
            job.terminal for job in run.jobs.values()
        ):
            run.finished_at = now_utc()

    # -- reporting ----------------------------------------------------------------

    def run_report(self, run: RunState) -> dict:
        with self._lock:
            jobs = [
                {
                    "worker": job.worker_name,
                    "document": job.document,
                    "state": job.state,
                    "attempts": job.attempts,
                    **(
                        {"last_error": job.last_error}
                        if job.last_error is not None
                        else {}
                    ),
                }
                for job in sorted(
                    run.jobs.values(),
                    key=lambda j: (j.document, j.worker_name),
                )
            ]
            report = {
                "run": run.run,
                "jobs": jobs,
                "finished": run.finished,
                "started_at": format_timestamp(run.started_at),
            }
            if run.finished_at is not None:
                report["finished_at"] = format_timestamp(run.finished_at)
            return report

    def document_job_states(self, document: str) -> dict[str, str]:
        """Most recent non-terminal state per worker for one document,
        across all active runs (used to answer "is it still coming?")."""
        with self._lock:
            states: dict[str, str] = {}
            for run in self._runs.values():
                if run.finished:
                    continue
                for (doc, worker), job in run.jobs.items():
                    if doc == document and not job.terminal:
                        states[worker] = job.state
            return states

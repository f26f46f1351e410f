"""Built-in analysis workers.

Each worker is a pure function over a WorkerInput, registered with the
standard descriptor table below. Extraction is the only worker that reads
raw document bytes; everything else consumes previously computed results.
"""

from __future__ import annotations

from typing import Optional, Sequence

from ..index import build_postings
from ..worker import Registry, WorkerDescriptor, WorkerInput
from . import analyze, extract, langdetect, pos, tokenizer

BUILTIN_VERSION = "1.0.0"


def extractor_process(work: WorkerInput) -> dict:
    return extract.extract(work.raw or b"", work.declared_type)


def langdetect_process(work: WorkerInput) -> dict:
    return {"language": langdetect.detect(work.required_results["text"])}


def tokenizer_process(work: WorkerInput) -> dict:
    tokens, sentences = tokenizer.tokenize(work.required_results["text"])
    return {"tokens": tokens, "sentences": [[a, b] for a, b in sentences]}


def freqdist_process(work: WorkerInput) -> dict:
    # "language" is a declared dependency of frequency counting even though
    # the computation is language-blind; the declaration is kept as-is.
    return {"freqdist": analyze.freq_dist(work.required_results["tokens"])}


def ngrams_process(work: WorkerInput) -> dict:
    sizes = work.run_data.get("ngrams_n", list(analyze.DEFAULT_NGRAM_SIZES))
    return {
        "ngrams": analyze.ngram_counts(
            work.required_results["tokens"], [int(n) for n in sizes]
        )
    }


def pos_process(work: WorkerInput) -> dict:
    return {
        "pos": pos.tag_tokens(
            work.required_results["tokens"], work.required_results["language"]
        )
    }


def statistics_process(work: WorkerInput) -> dict:
    return {
        "statistics": analyze.statistics(
            work.required_results["tokens"], work.required_results["sentences"]
        )
    }


def indexer_process(work: WorkerInput) -> dict:
    tokens = work.required_results["tokens"]
    return {
        "indexed": {
            "postings": build_postings(tokens),
            "token_count": len(tokens),
        }
    }


BUILTIN_WORKERS = (
    (
        WorkerDescriptor(
            name="extractor",
            version=BUILTIN_VERSION,
            produces=frozenset({"text", "mimetype"}),
            needs_raw=True,
        ),
        extractor_process,
    ),
    (
        WorkerDescriptor(
            name="langdetect",
            version=BUILTIN_VERSION,
            requires=("text",),
            produces=frozenset({"language"}),
        ),
        langdetect_process,
    ),
    (
        WorkerDescriptor(
            name="tokenizer",
            version=BUILTIN_VERSION,
            requires=("text",),
            produces=frozenset({"tokens", "sentences"}),
        ),
        tokenizer_process,
    ),
    (
        WorkerDescriptor(
            name="freqdist",
            version=BUILTIN_VERSION,
            requires=("tokens", "language"),
            produces=frozenset({"freqdist"}),
        ),
        freqdist_process,
    ),
    (
        WorkerDescriptor(
            name="ngrams",
            version=BUILTIN_VERSION,
            requires=("tokens",),
            produces=frozenset({"ngrams"}),
        ),
        ngrams_process,
    ),
    (
        WorkerDescriptor(
            name="pos",
            version=BUILTIN_VERSION,
            requires=("tokens", "language"),
            produces=frozenset({"pos"}),
        ),
        pos_process,
    ),
    (
        WorkerDescriptor(
            name="statistics",
            version=BUILTIN_VERSION,
            requires=("tokens", "sentences"),
            produces=frozenset({"statistics"}),
        ),
        statistics_process,
    ),
    (
        WorkerDescriptor(
            name="indexer",
            version=BUILTIN_VERSION,
            requires=("tokens",),
            produces=frozenset({"indexed"}),
        ),
        indexer_process,
    ),
)


def register_builtin_workers(
    registry: Registry, only: Optional[Sequence[str]] = None
) -> Registry:
    wanted = None if only is None else set(only)
    for descriptor, process in BUILTIN_WORKERS:
        if wanted is None or descriptor.name in wanted:
            registry.register(descriptor, process)
    return registry


def default_registry(only: Optional[Sequence[str]] = None) -> Registry:
    return register_builtin_workers(Registry(), only=only)

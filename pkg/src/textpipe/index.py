"""Positional inverted index with multi-term AND search and KWIC concordance.

Terms are lowercased tokens; a posting records the token positions of one
term in one document. Ranking is summed term frequency; ties fall back to
document upload order. Concordance windows are cut from the stored token
arrays at query time, so the index itself only keeps positions.
"""

from __future__ import annotations

import json
import os
import threading
from collections import defaultdict
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

MAX_CONCORDANCE_WIDTH = 25


class IndexError_(Exception):
    pass


class EmptyQuery(IndexError_):
    pass


class InvalidWidth(IndexError_):
    pass


def build_postings(tokens: Sequence[str]) -> dict[str, list[int]]:
    """Map each distinct lowercased token to its sorted positions."""
    postings: dict[str, list[int]] = defaultdict(list)
    for position, token in enumerate(tokens):
        postings[token.lower()].append(position)
    return dict(postings)


class InvertedIndex:
    """In-memory index, optionally persisted to a single JSON file."""

    def __init__(self, path: Optional[os.PathLike | str] = None):
        self._path = Path(path) if path is not None else None
        self._lock = threading.RLock()
        # term -> {document -> positions}
        self._terms: dict[str, dict[str, list[int]]] = {}
        # document -> (corpus, upload seq, token count)
        self._docs: dict[str, tuple[str, int, int]] = {}
        if self._path is not None and self._path.exists():
            self._load()

    # -- persistence -----------------------------------------------------------

    def _load(self) -> None:
        data = json.loads(self._path.read_text("utf-8"))
        with self._lock:
            self._docs = {
                doc: (meta[0], meta[1], meta[2])
                for doc, meta in data["docs"].items()
            }
            self._terms = {
                term: {doc: list(pos) for doc, pos in docs.items()}
                for term, docs in data["terms"].items()
            }

    def _save(self) -> None:
        if self._path is None:
            return
        data = {
            "docs": {doc: list(meta) for doc, meta in self._docs.items()},
            "terms": self._terms,
        }
        tmp = self._path.with_name(self._path.name + f".tmp{os.getpid()}")
        tmp.write_text(json.dumps(data, ensure_ascii=False, sort_keys=True), "utf-8")
        os.replace(tmp, self._path)

    # -- maintenance -----------------------------------------------------------

    def index_document(
        self,
        document: str,
        tokens: Sequence[str],
        *,
        corpus: str,
        seq: int,
    ) -> int:
        """(Re)index one document from its token list.

        Returns the number of distinct terms indexed. Re-indexing replaces
        the document's previous postings, so the call is idempotent.
        """
        return self.apply_postings(
            document,
            build_postings(tokens),
            token_count=len(tokens),
            corpus=corpus,
            seq=seq,
        )

    def apply_postings(
        self,
        document: str,
        postings: dict[str, Iterable[int]],
        *,
        token_count: int,
        corpus: str,
        seq: int,
    ) -> int:
        """Install precomputed postings for a document (used when the
        posting map was produced by a worker rather than built here)."""
        with self._lock:
            self._remove(document)
            for term, positions in postings.items():
                ordered = sorted(int(p) for p in positions)
                if not ordered:
                    continue
                if ordered[-1] >= token_count:
                    raise IndexError_(
                        f"position {ordered[-1]} out of range for {document}"
                    )
                self._terms.setdefault(term, {})[document] = ordered
            self._docs[document] = (corpus, seq, token_count)
            self._save()
            return len(postings)

    def _remove(self, document: str) -> None:
        if document not in self._docs:
            return
        for term in list(self._terms):
            self._terms[term].pop(document, None)
            if not self._terms[term]:
                del self._terms[term]
        del self._docs[document]

    def remove_document(self, document: str) -> None:
        with self._lock:
            self._remove(document)
            self._save()

    def clear(self) -> None:
        with self._lock:
            self._terms.clear()
            self._docs.clear()
            self._save()

    # -- queries -----------------------------------------------------------------

    @property
    def doc_count(self) -> int:
        with self._lock:
            return len(self._docs)

    def token_length(self, document: str) -> Optional[int]:
        with self._lock:
            meta = self._docs.get(document)
            return None if meta is None else meta[2]

    def posting_positions(self, term: str, document: str) -> list[int]:
        with self._lock:
            return list(self._terms.get(term.lower(), {}).get(document, []))

    @staticmethod
    def _corpus_filter(corpus) -> Optional[set[str]]:
        if corpus is None:
            return None
        if isinstance(corpus, str):
            return {corpus}
        return set(corpus)

    def search(
        self,
        terms: Sequence[str],
        corpus=None,
    ) -> list[tuple[str, int]]:
        """Documents containing ALL terms, ranked by summed term frequency.

        Ties are broken by upload order. Terms are lowercased; empty terms
        are dropped; an effectively empty query raises EmptyQuery. `corpus`
        restricts candidates to one corpus id or a collection of them.
        """
        query = [t.lower() for t in terms if t.strip()]
        if not query:
            raise EmptyQuery("search needs at least one non-empty term")
        allowed = self._corpus_filter(corpus)
        with self._lock:
            candidates: Optional[set[str]] = None
            for term in set(query):
                docs = set(self._terms.get(term, {}))
                candidates = docs if candidates is None else candidates & docs
                if not candidates:
                    return []
            assert candidates is not None
            if allowed is not None:
                candidates = {
                    d for d in candidates if self._docs[d][0] in allowed
                }
            scored = []
            for doc in candidates:
                score = sum(len(self._terms[term][doc]) for term in query)
                scored.append((doc, score))
            scored.sort(key=lambda item: (-item[1], self._docs[item[0]][1]))
            return scored

    def concordance(
        self,
        term: str,
        width: int,
        tokens_lookup: Callable[[str], Optional[Sequence[str]]],
        corpus=None,
    ) -> list[dict]:
        """KWIC lines for every occurrence of a term.

        Each line carries the document, token position, up to `width`
        context tokens on each side, and the keyword as stored (original
        case). Lines are ordered by document upload order then position.
        An unknown term yields an empty list.
        """
        if width < 1 or width > MAX_CONCORDANCE_WIDTH:
            raise InvalidWidth(
                f"width must be 1..{MAX_CONCORDANCE_WIDTH}, got {width}"
            )
        allowed = self._corpus_filter(corpus)
        with self._lock:
            postings = self._terms.get(term.lower(), {})
            docs = [
                doc
                for doc in postings
                if allowed is None or self._docs[doc][0] in allowed
            ]
            docs.sort(key=lambda d: self._docs[d][1])
            positions_by_doc = {doc: list(postings[doc]) for doc in docs}
        lines = []
        for doc in docs:
            tokens = tokens_lookup(doc)
            if tokens is None:
                continue
            for position in positions_by_doc[doc]:
                lines.append(
                    {
                        "document": doc,
                        "position": position,
                        "left": list(tokens[max(0, position - width) : position]),
                        "keyword": tokens[position],
                        "right": list(tokens[position + 1 : position + 1 + width]),
                    }
                )
        return lines

    def consistency_counts(self) -> tuple[int, int]:
        """(total posting positions, total indexed token count); the two
        must be equal for a consistent index."""
        with self._lock:
            positions = sum(
                len(pos)
                for docs in self._terms.values()
                for pos in docs.values()
            )
            tokens = sum(meta[2] for meta in self._docs.values())
            return positions, tokens


def rebuild_from_store(index: InvertedIndex, store) -> int:
    """Deterministically rebuild the whole index from stored token results.

    Documents are visited in upload order; documents with no tokens result
    are skipped. Returns the number of documents indexed.
    """
    index.clear()
    count = 0
    for doc_id in store.all_document_ids():
        tokens = store.get_result(doc_id, "tokens")
        if tokens is None:
            continue
        document = store.get_document(doc_id)
        index.index_document(
            doc_id,
            tokens,
            corpus=document.corpus,
            seq=store.document_seq(doc_id),
        )
        count += 1
    return count

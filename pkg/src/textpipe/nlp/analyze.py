"""Token frequency, n-grams, and repertoire statistics."""

from __future__ import annotations

from collections import Counter
from typing import Sequence

MAX_NGRAM = 10

DEFAULT_NGRAM_SIZES = (2, 3)


class InvalidN(ValueError):
    pass


def freq_dist(tokens: Sequence[str]) -> list[list]:
    """Lowercased token counts as [token, count] pairs, most frequent
    first; equal counts order lexicographically."""
    counts = Counter(token.lower() for token in tokens)
    return [
        [token, count]
        for token, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]


def ngram_counts(
    tokens: Sequence[str], n_values: Sequence[int] = DEFAULT_NGRAM_SIZES
) -> dict[str, list]:
    """Sliding-window n-gram counts over the lowercased token sequence.

    Windows may cross sentence boundaries but never the document end. The
    result maps str(n) to [gram-token-list, count] pairs sorted by count
    descending then gram ascending.
    """
    lowered = [token.lower() for token in tokens]
    result: dict[str, list] = {}
    for n in n_values:
        if n < 1 or n > MAX_NGRAM:
            raise InvalidN(f"n must be 1..{MAX_NGRAM}, got {n}")
        counts = Counter(
            tuple(lowered[i : i + n]) for i in range(len(lowered) - n + 1)
        )
        result[str(n)] = [
            [list(gram), count]
            for gram, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        ]
    return result


def is_alphabetic_token(token: str) -> bool:
    """Word-like tokens: letters, possibly with internal apostrophes or
    hyphens, starting with a letter."""
    if not token or not token[0].isalpha():
        return False
    return all(ch.isalpha() or ch in "'’-" for ch in token)


def statistics(
    tokens: Sequence[str], sentences: Sequence[Sequence[int]]
) -> dict:
    """Repertoire statistics over one document.

    word_repertoire counts distinct lowercased alphabetic tokens;
    sentence_repertoire counts distinct sentences after lowercasing and
    space-joining; type_token_ratio divides the word repertoire by the
    alphabetic token count.
    """
    words = [token.lower() for token in tokens if is_alphabetic_token(token)]
    distinct_words = len(set(words))
    normalized_sentences = {
        " ".join(token.lower() for token in tokens[span[0] : span[1]])
        for span in sentences
    }
    token_count = len(tokens)
    sentence_count = len(sentences)
    return {
        "word_repertoire": distinct_words,
        "sentence_repertoire": len(normalized_sentences),
        "type_token_ratio": (distinct_words / len(words)) if words else 0.0,
        "average_sentence_length_tokens": (
            token_count / sentence_count if sentence_count else 0.0
        ),
        "token_count": token_count,
        "sentence_count": sentence_count,
    }

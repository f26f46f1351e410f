"""Tokenization and sentence splitting.

Tokens are maximal runs of Unicode letters/digits; an apostrophe or hyphen
stays inside a token only with a letter on both sides. Every other
non-whitespace character is its own single-character token.

Sentences close after ".", "!" or "?" when the next alphabetic token starts
uppercase, except after known abbreviations; runs of terminators close after
the last one; trailing unterminated tokens form a final sentence.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

APOSTROPHES = {"'", "’"}
HYPHEN = "-"
TERMINATORS = {".", "!", "?"}


@lru_cache(maxsize=None)
def abbreviations() -> frozenset[str]:
    """Union of the bundled per-language abbreviation lists."""
    entries: set[str] = set()
    data = resources.files("textpipe.nlp") / "data"
    for name in ("abbrev_en.txt", "abbrev_pt.txt"):
        for line in (data / name).read_text("utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                entries.add(line.lower())
    return frozenset(entries)


def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


def tokenize_text(text: str) -> list[str]:
    tokens: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if _is_word_char(ch):
            j = i + 1
            while j < n:
                c = text[j]
                if _is_word_char(c):
                    j += 1
                elif (
                    (c in APOSTROPHES or c == HYPHEN)
                    and j + 1 < n
                    and text[j - 1].isalpha()
                    and text[j + 1].isalpha()
                ):
                    j += 1
                else:
                    break
            tokens.append(text[i:j])
            i = j
        else:
            tokens.append(ch)
            i += 1
    return tokens


def _abbreviation_before(tokens: list[str], idx: int, known: frozenset[str]) -> bool:
    if idx == 0:
        return False
    if tokens[idx - 1].lower() in known:
        return True
    # Dotted abbreviations ("e.g", "i.e") arrive as word . word tokens.
    if idx >= 3 and tokens[idx - 2] == ".":
        joined = f"{tokens[idx - 3]}.{tokens[idx - 1]}".lower()
        if joined in known:
            return True
    return False


def sentence_spans(tokens: list[str]) -> list[tuple[int, int]]:
    """Half-open (start, end) token spans partitioning the token list."""
    known = abbreviations()
    spans: list[tuple[int, int]] = []
    start = 0
    for idx, token in enumerate(tokens):
        if token not in TERMINATORS:
            continue
        if idx + 1 < len(tokens) and tokens[idx + 1] in TERMINATORS:
            continue  # split after the last terminator of a run
        following = next(
            (t for t in tokens[idx + 1 :] if t[:1].isalpha()), None
        )
        if following is None or not following[0].isupper():
            continue
        if token == "." and _abbreviation_before(tokens, idx, known):
            continue
        spans.append((start, idx + 1))
        start = idx + 1
    if start < len(tokens):
        spans.append((start, len(tokens)))
    return spans


def tokenize(text: str) -> tuple[list[str], list[tuple[int, int]]]:
    tokens = tokenize_text(text)
    return tokens, sentence_spans(tokens)

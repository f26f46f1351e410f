"""Rule-and-lexicon part-of-speech tagging over the 12-tag universal set.

The cascade per token: punctuation, numbers, lexicon lookup (closed classes
and common verbs, one tag per entry), language-specific suffix rules, and
finally NOUN. Unknown-language documents get X for everything but
punctuation, so downstream consumers can still rely on tag alignment.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from typing import Sequence

TAGS = (
    "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP",
    "NUM", "CONJ", "PRT", "PUNCT", "X",
)

_NUM_RE = re.compile(r"^\d+([.,:/\-]\d+)*$")

# Checked in order; a token must be at least two characters longer than the
# suffix for the rule to fire.
SUFFIX_RULES = {
    "en": (
        ("ly", "ADV"),
        ("ing", "VERB"),
        ("ed", "VERB"),
        ("ous", "ADJ"),
        ("ful", "ADJ"),
        ("ive", "ADJ"),
        ("tion", "NOUN"),
        ("ness", "NOUN"),
        ("ment", "NOUN"),
    ),
    "pt": (
        ("mente", "ADV"),
        ("ção", "NOUN"),
        ("dade", "NOUN"),
        ("mento", "NOUN"),
        ("ar", "VERB"),
        ("er", "VERB"),
        ("ir", "VERB"),
        ("oso", "ADJ"),
        ("osa", "ADJ"),
        ("ável", "ADJ"),
    ),
}


@lru_cache(maxsize=None)
def lexicon(language: str) -> dict[str, str]:
    path = resources.files("textpipe.nlp") / "data" / f"lexicon_{language}.tsv"
    entries: dict[str, str] = {}
    for line in path.read_text("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, tag = line.split("\t")
        entries[word] = tag
    return entries


def _is_punct(token: str) -> bool:
    return len(token) == 1 and not token.isalnum()


def tag_token(token: str, language: str) -> str:
    if _is_punct(token):
        return "PUNCT"
    if language not in SUFFIX_RULES:
        return "X"
    if _NUM_RE.match(token):
        return "NUM"
    entry = lexicon(language).get(token.lower())
    if entry is not None:
        return entry
    lowered = token.lower()
    for suffix, tag in SUFFIX_RULES[language]:
        if lowered.endswith(suffix) and len(lowered) >= len(suffix) + 2:
            return tag
    return "NOUN"


def tag_tokens(tokens: Sequence[str], language: str) -> list[list[str]]:
    """[token, tag] pairs aligned one-to-one with the input tokens."""
    return [[token, tag_token(token, language)] for token in tokens]

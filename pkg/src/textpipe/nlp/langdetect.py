"""Language identification from character trigram profiles.

A profile is the 300 most frequent letter trigrams of a bundled training
text, compared to a document's trigram counts by cosine similarity. The
bundled profiles cover English and Portuguese; anything scoring below the
similarity floor, or with fewer than 20 alphabetic characters, is "und".
"""

from __future__ import annotations

import math
from collections import Counter
from functools import lru_cache
from importlib import resources

PROFILE_SIZE = 300
SIMILARITY_FLOOR = 0.1
MIN_ALPHA_CHARS = 20

LANGUAGES = ("en", "pt")


def normalize(text: str) -> str:
    """Lowercase letters only, non-letters as single spaces, padded so
    word-edge trigrams are represented."""
    mapped = "".join(ch.lower() if ch.isalpha() else " " for ch in text)
    collapsed = " ".join(mapped.split())
    return f" {collapsed} " if collapsed else ""


def trigram_counts(text: str) -> Counter:
    normalized = normalize(text)
    return Counter(
        normalized[i : i + 3] for i in range(max(0, len(normalized) - 2))
    )


def build_profile(text: str, size: int = PROFILE_SIZE) -> list[tuple[str, int]]:
    """Top trigrams by count; equal counts order lexicographically so the
    profile is reproducible."""
    counts = trigram_counts(text)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:size]


def profile_to_tsv(profile: list[tuple[str, int]]) -> str:
    return "".join(f"{tri}\t{count}\n" for tri, count in profile)


def profile_from_tsv(text: str) -> dict[str, int]:
    profile: dict[str, int] = {}
    for line in text.split("\n"):
        if not line:
            continue
        tri, count = line.split("\t")
        profile[tri] = int(count)
    return profile


@lru_cache(maxsize=None)
def bundled_profiles() -> dict[str, dict[str, int]]:
    data = resources.files("textpipe.nlp") / "data"
    return {
        lang: profile_from_tsv((data / f"profile_{lang}.tsv").read_text("utf-8"))
        for lang in LANGUAGES
    }


@lru_cache(maxsize=None)
def training_text(language: str) -> str:
    data = resources.files("textpipe.nlp") / "data"
    return (data / f"train_{language}.txt").read_text("utf-8")


def cosine_similarity(counts: Counter, profile: dict[str, int]) -> float:
    if not counts or not profile:
        return 0.0
    dot = sum(counts.get(tri, 0) * weight for tri, weight in profile.items())
    if dot == 0:
        return 0.0
    doc_norm = math.sqrt(sum(c * c for c in counts.values()))
    profile_norm = math.sqrt(sum(w * w for w in profile.values()))
    return dot / (doc_norm * profile_norm)


def detect(text: str, profiles: dict[str, dict[str, int]] | None = None) -> str:
    """Language code for a text: "en", "pt" or "und"."""
    alpha_chars = sum(1 for ch in text if ch.isalpha())
    if alpha_chars < MIN_ALPHA_CHARS:
        return "und"
    if profiles is None:
        profiles = bundled_profiles()
    counts = trigram_counts(text)
    best_language = "und"
    best_similarity = 0.0
    for language in sorted(profiles):
        similarity = cosine_similarity(counts, profiles[language])
        if similarity > best_similarity:
            best_language = language
            best_similarity = similarity
    if best_similarity < SIMILARITY_FLOOR:
        return "und"
    return best_language

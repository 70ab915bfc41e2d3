"""Trace-evidence category vocabulary and keyword lexicons.

The 16-category palette and the per-category keyword lists are shipped as
package data so that every consumer (library, CLI, annotation UI) reads the
same closed vocabulary.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def palette() -> tuple[str, ...]:
    """The closed 16-element trace-evidence category set, in canonical order."""
    raw = resources.files("tracekit.data").joinpath("categories.json").read_text("utf-8")
    cats = tuple(json.loads(raw)["categories"])
    if len(cats) != 16:
        raise RuntimeError(f"category palette must have 16 entries, found {len(cats)}")
    return cats


@lru_cache(maxsize=1)
def lexicon() -> dict[str, tuple[str, ...]]:
    """Per-category keyword lists used for lexical coverage checks."""
    raw = resources.files("tracekit.data").joinpath("category_lexicon.json").read_text("utf-8")
    lex = {cat: tuple(words) for cat, words in json.loads(raw).items()}
    missing = set(palette()) - set(lex)
    if missing:
        raise RuntimeError(f"lexicon missing categories: {sorted(missing)}")
    return lex


def canonical_order(categories) -> list[str]:
    """Sort a category subset into palette order (deterministic serialization)."""
    index = {c: i for i, c in enumerate(palette())}
    return sorted(categories, key=lambda c: index[c])


def validate_categories(categories) -> list[str]:
    """Return the tokens that are not in the palette (empty list when all valid)."""
    known = set(palette())
    return [c for c in categories if c not in known]


def category_hits(text: str, category: str) -> bool:
    """True when at least one lexicon keyword for `category` occurs in `text`.

    Matching is case-insensitive on word boundaries; multi-word keywords match
    as phrases.
    """
    low = text.lower()
    for kw in lexicon()[category]:
        if re.search(r"(?<![a-z0-9])" + re.escape(kw) + r"(?![a-z0-9])", low):
            return True
    return False


def uncovered_categories(text: str, categories) -> list[str]:
    """Categories from `categories` with no lexicon hit in `text`."""
    return [c for c in canonical_order(categories) if not category_hits(text, c)]


# Polarity vocabulary for verdict parsing. Single tokens only; the parser
# tokenizes replies and applies a negation window, so phrases stay out.
FAKE_TOKENS = frozenset({"fake", "synthetic", "ai-generated", "artificial", "generated", "fabricated"})
REAL_TOKENS = frozenset({"real", "genuine", "authentic"})
NEGATION_TOKENS = frozenset({"not", "no", "never", "cannot", "isn't", "aren't", "wasn't", "doesn't", "don't", "neither", "nor"})

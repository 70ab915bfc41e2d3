"""Shared builders: corpora with dual annotations and registries that cover
the full category palette, plus a terminal summary hook that prints one
pass/fail line per acceptance criterion."""

from __future__ import annotations

import hashlib

import pytest

from tracekit import categories as cat
from tracekit.annotation import AnnotationStore, Exemplar, ExpertAnnotation
from tracekit.corpus import Corpus, CorpusManifest, ManifestEntry


def synth_hash(tag: str) -> str:
    return hashlib.sha256(tag.encode()).hexdigest()


def build_corpus(root, n_fake: int, n_real: int, generator: str = "gen-x",
                 tag: str = "desk") -> Corpus:
    corpus = Corpus(root)
    entries = [ManifestEntry(path=f"uri://fake/{i}.png", auth="fake", generator=generator,
                             source="desk", hash=synth_hash(f"fake:{tag}:{i}"))
               for i in range(n_fake)]
    entries += [ManifestEntry(path=f"uri://real/{i}.png", auth="real", source="desk",
                              hash=synth_hash(f"real:{tag}:{i}"))
                for i in range(n_real)]
    corpus.ingest(CorpusManifest(entries=entries))
    return corpus


def exemplar_text(covered) -> str:
    lex = cat.lexicon()
    return " ".join(f"Notice how the {lex[c][0]} sits oddly against the scene." for c in covered)


def seed_registry(store: AnnotationStore) -> None:
    """Register exemplars so every palette category is covered by at least 3,
    with both polarities present."""
    cats = list(cat.palette())
    n = 0
    for repeat in range(3):
        for i in range(0, len(cats), 2):
            n += 1
            covered = tuple(cats[i:i + 2])
            store.register_exemplar(Exemplar(
                exemplar_id=f"ex-{n:04d}", image_id=f"uri://exemplar/{n}.png",
                polarity="positive" if n % 2 else "negative",
                reasoning_text=exemplar_text(covered), covered=frozenset(covered)))


def dual_annotate(store: AnnotationStore, image_id: str, cats_a, cats_b,
                  verdicts=None, notes_a=None) -> None:
    record = store.corpus.get(image_id)
    verdicts = verdicts or (record.auth, record.auth)
    store.submit_annotation(ExpertAnnotation(
        image_id=image_id, annotator_id="a1", verdict=verdicts[0],
        categories=frozenset(cats_a), notes=notes_a, timestamp="2026-01-01T00:00:00Z"))
    store.submit_annotation(ExpertAnnotation(
        image_id=image_id, annotator_id="a2", verdict=verdicts[1],
        categories=frozenset(cats_b), timestamp="2026-01-01T00:00:01Z"))


def annotate_everything(store: AnnotationStore, spread: int = 3) -> None:
    """Dual-annotate every corpus image with overlapping category pairs."""
    cats = list(cat.palette())
    for idx, record in enumerate(store.corpus.records()):
        shared = cats[idx % len(cats)]
        extra_a = cats[(idx + spread) % len(cats)]
        extra_b = cats[(idx + 2 * spread + 1) % len(cats)]
        dual_annotate(store, record.id, {shared, extra_a}, {shared, extra_b})


# --- acceptance reporting ---

def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            name = getattr(report, "nodeid", "")
            if "test_acceptance.py::" in name:
                rows.append((name.split("::")[-1], outcome.upper()))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in sorted(rows):
            terminalreporter.write_line(f"{outcome:6s} {name}")

"""Corpus handling walkthrough: ingest with dedup, stratified splits, and a
cross-corpus contamination check.

Run from the repo root after `pip install -e .`:

    python3 demos/01_corpus_and_contamination.py
"""

import json
import tempfile
from pathlib import Path

from tracekit.corpus import (
    Corpus,
    CorpusManifest,
    ManifestEntry,
    check_contamination,
    split_records,
)

work = Path(tempfile.mkdtemp(prefix="demo-corpus-"))
print(f"workspace: {work}\n")

# fabricate a tiny image collection (bytes stand in for pixels)
files = []
for i in range(6):
    p = work / f"shot_{i}.png"
    p.write_bytes(f"pixels-{i % 5}".encode())  # shot_5 duplicates shot_0
    files.append(p)

manifest = CorpusManifest(
    entries=[ManifestEntry(path=str(p), auth="fake" if i < 3 else "real",
                           generator="demo-gen" if i < 3 else None, source="demo")
             for i, p in enumerate(files)],
    name="demo")

corpus = Corpus(work / "corpus")
summary = corpus.ingest(manifest)
print("ingest summary:", json.dumps(summary.__dict__, default=str))
print("the duplicate byte stream was ingested once; records on disk:")
for record in corpus.records():
    print("  ", record.to_json())

print("\nre-ingesting the same manifest is a no-op:")
print("  ", json.dumps(corpus.ingest(manifest).__dict__, default=str))

# stratified split: class proportions survive within one item
parts = split_records(corpus.records(), [0.6, 0.4], seed=11)
for i, part in enumerate(parts):
    fake = sum(1 for r in part if r.auth == "fake")
    print(f"split {i}: {len(part)} records ({fake} fake)")

# a second corpus sharing two byte streams with the first
other = Corpus(work / "other")
other.ingest(CorpusManifest(entries=[
    ManifestEntry(path=str(files[0]), auth="fake", source="demo"),
    ManifestEntry(path=str(files[3]), auth="real", source="demo"),
]))
report = check_contamination(corpus, other)
print(f"\ncontamination: {report.count} shared hashes")
for h in report.overlapping_hashes:
    print("  ", h[:16], "...")

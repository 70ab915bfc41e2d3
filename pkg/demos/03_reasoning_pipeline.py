"""Reasoning-generation walkthrough: exact minimum exemplar cover, the
four-slot prompt, validation, and dataset emission against the scripted mock.

    python3 demos/03_reasoning_pipeline.py
"""

import hashlib
import json
import tempfile
from pathlib import Path

from tracekit.annotation import AnnotationStore, Exemplar, ExpertAnnotation
from tracekit.categories import lexicon, palette
from tracekit.corpus import Corpus, CorpusManifest, ManifestEntry
from tracekit.gateway import ScriptedGateway
from tracekit.reasoning import (
    assemble_prompt,
    build_fakechain,
    render_request,
    run_reasoning,
    select_exemplars,
    validate_reasoning,
)

work = Path(tempfile.mkdtemp(prefix="demo-reason-"))
corpus = Corpus(work / "corpus")
corpus.ingest(CorpusManifest(entries=[
    ManifestEntry(path=f"uri://demo/fake_{i}.png", auth="fake", generator="demo-gen",
                  source="demo", hash=hashlib.sha256(f"demo-fake-{i}".encode()).hexdigest())
    for i in range(3)
] + [
    ManifestEntry(path=f"uri://demo/real_{i}.png", auth="real", source="demo",
                  hash=hashlib.sha256(f"demo-real-{i}".encode()).hexdigest())
    for i in range(3)
]))
store = AnnotationStore(corpus)

# a compact registry: every category covered, both polarities present
lex = lexicon()
cats = list(palette())
for n, group in enumerate([cats[i:i + 4] for i in range(0, 16, 4)] * 2, start=1):
    text = " ".join(f"Here the {lex[c][0]} looks stretched along the lower edge." for c in group)
    store.register_exemplar(Exemplar(
        exemplar_id=f"ex-{n:04d}", image_id=f"uri://demo/ex{n}.png",
        polarity="positive" if n % 2 else "negative",
        reasoning_text=text, covered=frozenset(group)))

for record in corpus.records():
    for annotator in ("expert-1", "expert-2"):
        store.submit_annotation(ExpertAnnotation(
            image_id=record.id, annotator_id=annotator, verdict=record.auth,
            categories=frozenset({"texture", "perspective"})))

image = corpus.records()[0]
merged = store.merge_dual(image.id)
selection = select_exemplars(merged.categories, store.registry)
print(f"steering {sorted(merged.categories)} -> minimum cover of {selection.cardinality}:"
      f" {selection.exemplar_ids}")
print(f"  covers {sorted(selection.covered)[:6]}..., both polarities:"
      f" {selection.has_positive and selection.has_negative}\n")

bundle = assemble_prompt(image.id, merged, selection, store.registry,
                         auth=image.auth, notes=store.merged_notes(image.id))
request = render_request(bundle)
print("prompt (user turn, first 400 chars):")
print(request.messages[1].content[:400], "...\n")

gateway = ScriptedGateway(seed=7)
record = run_reasoning(bundle, gateway)
print(f"mock reasoning (attempt {record.attempt_count}):\n{record.rsn}\n")
print("validation:", validate_reasoning(record.rsn, record.auth, record.steering))

out = work / "chain.jsonl"
manifest = build_fakechain(corpus, store, gateway, out)
print("\ndataset manifest:", json.dumps(manifest, indent=2))
print("first record:", out.read_text().splitlines()[0][:140], "...")

"""Expert-feedback walkthrough: dual annotation with the intersection rule,
exemplar registration with the coverage constraint, and a 2AFC tally.

    python3 demos/02_annotation_workflow.py
"""

import tempfile
from pathlib import Path

from tracekit import categories
from tracekit.annotation import (
    AnnotationStore,
    Exemplar,
    ExpertAnnotation,
    TwoAfcVote,
    tally_2afc,
)
from tracekit.corpus import Corpus, CorpusManifest, ManifestEntry

work = Path(tempfile.mkdtemp(prefix="demo-annot-"))
corpus = Corpus(work / "corpus")
corpus.ingest(CorpusManifest(entries=[
    ManifestEntry(path="uri://demo/suspicious.png", auth="fake", generator="demo-gen",
                  source="demo", hash="a" * 64),
    ManifestEntry(path="uri://demo/holiday.png", auth="real", source="demo", hash="b" * 64),
]))
store = AnnotationStore(corpus, work / "state")
fake_img, real_img = [r.id for r in corpus.records()]
print("palette:", ", ".join(categories.palette()), "\n")

# two experts look at the fake image; only their common categories survive
ack1 = store.submit_annotation(ExpertAnnotation(
    image_id=fake_img, annotator_id="expert-1", verdict="fake",
    categories=frozenset({"texture", "edge", "anatomy"}),
    notes="fingers merge near the cup handle"))
ack2 = store.submit_annotation(ExpertAnnotation(
    image_id=fake_img, annotator_id="expert-2", verdict="fake",
    categories=frozenset({"edge", "anatomy", "light&shadow"})))
print("verdict checks:", ack1, ack2)
merged = store.merge_dual(fake_img)
print(f"merged -> status={merged.status}, categories={sorted(merged.categories)}")
print("notes travel verbatim:", repr(store.merged_notes(fake_img)), "\n")

# a disagreeing pair gets requeued instead of silently dropped
store.submit_annotation(ExpertAnnotation(
    image_id=real_img, annotator_id="expert-1", verdict="fake",
    categories=frozenset({"overall hue"})))
store.submit_annotation(ExpertAnnotation(
    image_id=real_img, annotator_id="expert-2", verdict="real",
    categories=frozenset({"overall hue"})))
print("disagreement ->", store.merge_dual(real_img).status)
print("requeued images:", sorted(store.requeue), "\n")

# exemplars back the demonstration step; coverage wants >= 3 per category
lex = categories.lexicon()
for n, cats in enumerate([("texture", "edge"), ("texture", "clarity"), ("texture",),
                          ("edge", "clarity"), ("edge",), ("clarity",)], start=1):
    text = " ".join(f"The {lex[c][0]} drifts unnaturally near the center." for c in cats)
    store.register_exemplar(Exemplar(
        exemplar_id=f"ex-{n:04d}", image_id=f"uri://demo/ex{n}.png",
        polarity="positive" if n % 2 else "negative",
        reasoning_text=text, covered=frozenset(cats)))
report = store.validate_coverage()
print("exemplar balance:", store.registry.balance())
print("covered >=3:", [c for c, k in report.per_category_counts.items() if k >= 3])
print("violations (first 3):", report.violations[:3], "...\n")

# preference study: six raters, one hundred paired items
votes = [TwoAfcVote(rater_id=f"rater-{r}", item_id=f"pair-{i}", choice="A")
         for r in range(6) for i in range(100)]
votes = votes[:-5] + [TwoAfcVote(rater_id="rater-5", item_id=f"pair-{95 + i}", choice="B")
                      for i in range(5)]
result = tally_2afc(votes, preferred="A")
print(f"2AFC: {result.n_preferred}/{result.n_votes} prefer A -> {result.percent}%")

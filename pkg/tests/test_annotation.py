from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracekit import categories as cat
from tracekit.annotation import (
    AnnotationError,
    AnnotationStore,
    DuplicateExemplar,
    Exemplar,
    ExpertAnnotation,
    MERGE_ACCEPTED,
    MERGE_EMPTY_INTERSECTION,
    MERGE_WRONG_VERDICT,
    ProtocolError,
    TwoAfcVote,
    UnknownCategory,
    tally_2afc,
)
from tracekit.corpus import Corpus, CorpusManifest, ManifestEntry


def synth_hash(tag: str) -> str:
    import hashlib
    return hashlib.sha256(tag.encode()).hexdigest()


@pytest.fixture
def store(tmp_path):
    corpus = Corpus(tmp_path / "corpus")
    entries = [ManifestEntry(path=f"uri://fake/{i}", auth="fake", hash=synth_hash(f"fake{i}"))
               for i in range(4)]
    entries += [ManifestEntry(path=f"uri://real/{i}", auth="real", hash=synth_hash(f"real{i}"))
                for i in range(4)]
    corpus.ingest(CorpusManifest(entries=entries))
    return AnnotationStore(corpus)


def fake_ids(store):
    return [r.id for r in store.corpus.records() if r.auth == "fake"]


def annotate(store, image_id, annotator, verdict, categories, notes=None):
    return store.submit_annotation(ExpertAnnotation(
        image_id=image_id, annotator_id=annotator, verdict=verdict,
        categories=frozenset(categories), notes=notes, timestamp="2026-01-01T00:00:00Z"))


# --- submit ---

def test_submit_correct_and_wrong_verdicts(store):
    img = fake_ids(store)[0]
    assert annotate(store, img, "a1", "fake", {"texture"}) == {"verdict_correct": True}
    assert annotate(store, img, "a2", "real", {"texture"}) == {"verdict_correct": False}


def test_submit_unknown_category_names_token(store):
    img = fake_ids(store)[0]
    with pytest.raises(UnknownCategory) as exc:
        annotate(store, img, "a1", "fake", {"vibes"})
    assert exc.value.token == "vibes"


def test_submit_unknown_image(store):
    from tracekit.annotation import UnknownImage
    with pytest.raises(UnknownImage):
        annotate(store, "img-nope", "a1", "fake", {"texture"})


def test_submit_replacement_audited(store):
    img = fake_ids(store)[0]
    annotate(store, img, "a1", "fake", {"texture"})
    annotate(store, img, "a1", "fake", {"edge"})
    assert len(store.annotations_for(img)) == 1
    assert store.annotations_for(img)[0].categories == {"edge"}
    assert store.audit_log[-1]["event"] == "annotation_replaced"


def test_empty_categories_rejected():
    with pytest.raises(AnnotationError):
        ExpertAnnotation(image_id="x", annotator_id="a", verdict="fake",
                         categories=frozenset())


# --- merge ---

def test_merge_intersection_accepted(store):
    img = fake_ids(store)[0]
    annotate(store, img, "a1", "fake", {"texture", "edge"})
    annotate(store, img, "a2", "fake", {"edge", "layout"})
    merged = store.merge_dual(img)
    assert merged.status == MERGE_ACCEPTED
    assert merged.categories == {"edge"}


def test_merge_identical_sets(store):
    img = fake_ids(store)[0]
    annotate(store, img, "a1", "fake", {"anatomy"})
    annotate(store, img, "a2", "fake", {"anatomy"})
    merged = store.merge_dual(img)
    assert merged.status == MERGE_ACCEPTED and merged.categories == {"anatomy"}


def test_merge_empty_intersection_rejected(store):
    img = fake_ids(store)[0]
    annotate(store, img, "a1", "fake", {"texture"})
    annotate(store, img, "a2", "fake", {"layout"})
    merged = store.merge_dual(img)
    assert merged.status == MERGE_EMPTY_INTERSECTION
    assert merged.categories == frozenset()
    assert img in store.requeue


def test_merge_wrong_verdict_rejected(store):
    img = fake_ids(store)[0]
    annotate(store, img, "a1", "real", {"texture"})
    annotate(store, img, "a2", "fake", {"texture"})
    assert store.merge_dual(img).status == MERGE_WRONG_VERDICT


def test_merge_requires_exactly_two(store):
    img = fake_ids(store)[0]
    annotate(store, img, "a1", "fake", {"texture"})
    with pytest.raises(ProtocolError):
        store.merge_dual(img)
    annotate(store, img, "a2", "fake", {"texture"})
    annotate(store, img, "a3", "fake", {"texture"})
    with pytest.raises(ProtocolError):
        store.merge_dual(img)


def test_merge_idempotent_and_subset(store):
    img = fake_ids(store)[0]
    annotate(store, img, "a1", "fake", {"texture", "edge", "clarity"})
    annotate(store, img, "a2", "fake", {"edge", "clarity", "physics"})
    first = store.merge_dual(img)
    second = store.merge_dual(img)
    assert first == second
    for a in store.annotations_for(img):
        assert first.categories <= a.categories


@settings(max_examples=50, deadline=None)
@given(c1=st.sets(st.sampled_from(sorted(cat.palette())), min_size=1, max_size=6),
       c2=st.sets(st.sampled_from(sorted(cat.palette())), min_size=1, max_size=6))
def test_merge_commutative_in_annotator_order(tmp_path_factory, c1, c2):
    tmp_path = tmp_path_factory.mktemp("m")
    corpus = Corpus(tmp_path / "c")
    corpus.ingest(CorpusManifest(entries=[ManifestEntry(path="u://1", auth="fake", hash="0" * 64)]))
    img = corpus.records()[0].id

    results = []
    for order in ((("a1", c1), ("a2", c2)), (("a1", c2), ("a2", c1))):
        store = AnnotationStore(corpus)
        for annotator, cats in order:
            store.submit_annotation(ExpertAnnotation(
                image_id=img, annotator_id=annotator, verdict="fake",
                categories=frozenset(cats), timestamp="t"))
        results.append(store.merge_dual(img))
    assert results[0].categories == results[1].categories
    assert results[0].status == results[1].status


# --- requeue / queue ---

def test_rejected_image_requeued_for_all(store):
    img = fake_ids(store)[0]
    annotate(store, img, "a1", "fake", {"texture"})
    annotate(store, img, "a2", "fake", {"layout"})
    store.merge_dual(img)
    assert any(r.id == img for r in store.queue_for("a1"))
    # resubmission takes it back off the requeue
    annotate(store, img, "a1", "fake", {"texture", "layout"})
    assert all(r.id != img for r in store.queue_for("a1"))


def test_queue_excludes_done(store):
    img = fake_ids(store)[0]
    assert any(r.id == img for r in store.queue_for("a1"))
    annotate(store, img, "a1", "fake", {"texture"})
    assert all(r.id != img for r in store.queue_for("a1"))
    assert any(r.id == img for r in store.queue_for("a2"))


# --- exemplars ---

def exemplar(i, polarity="positive", covered=("texture",), image=None):
    text = " ".join(f"The {cat.lexicon()[c][0]} looks suspicious here." for c in covered)
    return Exemplar(exemplar_id=f"ex-{i:04d}", image_id=image or f"img-ex{i}",
                    polarity=polarity, reasoning_text=text, covered=frozenset(covered))


def test_register_and_balance(store):
    store.register_exemplar(exemplar(1, "positive", ("texture", "edge")))
    store.register_exemplar(exemplar(2, "negative", ("layout",)))
    assert store.registry.balance() == {"positive": 1, "negative": 1, "balanced": True}


def test_register_rejects_duplicate_image(store):
    store.register_exemplar(exemplar(1, image="img-same"))
    with pytest.raises(DuplicateExemplar):
        store.register_exemplar(exemplar(2, image="img-same"))


def test_register_rejects_empty_text():
    with pytest.raises(AnnotationError):
        Exemplar(exemplar_id="e", image_id="i", polarity="positive",
                 reasoning_text="   ", covered=frozenset({"texture"}))


def test_register_rejects_unevidenced_category(store):
    bad = Exemplar(exemplar_id="e1", image_id="i1", polarity="positive",
                   reasoning_text="The texture is rough.", covered=frozenset({"texture", "physics"}))
    with pytest.raises(AnnotationError) as exc:
        store.register_exemplar(bad)
    assert "physics" in str(exc.value)


def test_fifty_fifty_balance(store):
    for i in range(50):
        store.register_exemplar(exemplar(i, "positive"))
    for i in range(50, 100):
        store.register_exemplar(exemplar(i, "negative"))
    assert store.registry.balance() == {"positive": 50, "negative": 50, "balanced": True}


# --- coverage ---

def test_coverage_all_satisfied(store):
    n = 0
    for c in cat.palette():
        for k in range(3):
            n += 1
            store.register_exemplar(exemplar(n, "positive" if n % 2 else "negative", (c,)))
    report = store.validate_coverage()
    assert report.violations == []
    assert report.ok


def test_coverage_violation_counts(store):
    store.register_exemplar(exemplar(1, "positive", ("physics",)))
    store.register_exemplar(exemplar(2, "negative", ("physics",)))
    report = store.validate_coverage()
    v = {x["category"]: x for x in report.violations}
    assert v["physics"]["count"] == 2 and v["physics"]["required"] == 3
    assert v["texture"]["count"] == 0


def test_coverage_matches_brute_force_recount(store):
    rng = random.Random(17)
    cats = sorted(cat.palette())
    registered = []
    for i in range(20):
        covered = tuple(rng.sample(cats, rng.randint(1, 4)))
        ex = exemplar(i, "positive" if rng.random() < 0.5 else "negative", covered)
        store.register_exemplar(ex)
        registered.append(ex)
    report = store.validate_coverage()
    for c in cats:
        recount = sum(1 for e in registered if c in e.covered)
        assert report.per_category_counts[c] == recount
        assert (c in {v["category"] for v in report.violations}) == (recount < 3)


# --- 2AFC ---

def vote(r, i, choice):
    return TwoAfcVote(rater_id=r, item_id=i, choice=choice)


def test_tally_six_raters_hundred_items():
    votes = [vote(f"r{i % 6}", f"item{i // 6}", "A") for i in range(595)]
    votes += [vote(f"r{i % 6}", f"x{i}", "B") for i in range(5)]
    result = tally_2afc(votes, "A")
    assert result.n_votes == 600
    assert result.percent == 99.17


def test_tally_unanimous_and_hand_count():
    assert tally_2afc([vote("r", f"i{k}", "A") for k in range(10)], "A").percent == 100.00
    votes = [vote("r", f"i{k}", "A" if k < 3 else "B") for k in range(8)]
    assert tally_2afc(votes, "A").percent == 37.50


def test_tally_empty_rejected():
    with pytest.raises(AnnotationError):
        tally_2afc([], "A")


def test_tally_permutation_invariant():
    rng = random.Random(1)
    votes = [vote(f"r{k}", f"i{k}", rng.choice("AB")) for k in range(50)]
    shuffled = votes[:]
    rng.shuffle(shuffled)
    assert tally_2afc(votes, "A") == tally_2afc(shuffled, "A")


def test_vote_idempotent_and_conflicting(store):
    from tracekit.annotation import VoteConflict
    assert store.cast_vote(vote("r1", "i1", "A")) == {"status": "recorded"}
    assert store.cast_vote(vote("r1", "i1", "A")) == {"status": "duplicate"}
    with pytest.raises(VoteConflict):
        store.cast_vote(vote("r1", "i1", "B"))
    assert store.tally("A").n_votes == 1


# --- persistence ---

def test_state_replay_roundtrip(tmp_path, store):
    state = tmp_path / "state"
    persisted = AnnotationStore(store.corpus, state)
    img = fake_ids(store)[0]
    persisted.submit_annotation(ExpertAnnotation(
        image_id=img, annotator_id="a1", verdict="fake",
        categories=frozenset({"texture"}), notes="left corner", timestamp="t"))
    persisted.register_exemplar(exemplar(1, "positive", ("texture",)))
    persisted.cast_vote(vote("r1", "i1", "A"))

    reloaded = AnnotationStore(store.corpus, state)
    assert reloaded.annotations_for(img)[0].notes == "left corner"
    assert len(reloaded.registry) == 1
    assert reloaded.tally("A").n_votes == 1

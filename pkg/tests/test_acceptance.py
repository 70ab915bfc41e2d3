"""Acceptance gate: every criterion at its stated tolerance, mock gateway only.

One test per criterion; the conftest terminal-summary hook prints a pass/fail
line for each. Oracles here are independent of the implementation paths they
check (direct scalar softmax, exhaustive subset enumeration, pairwise loops,
hand-counted fixtures).
"""

from __future__ import annotations

import itertools
import json
import math
import random
import time

import pytest

from tests.conftest import build_corpus, seed_registry, annotate_everything
from tracekit.annotation import tally_2afc, TwoAfcVote
from tracekit.categories import palette
from tracekit.gateway import ScriptedGateway
from tracekit.instructions import InstructionRecord, decontaminate, _probe_request
from tracekit.metrics import (
    ScoredItem,
    aggregate_overall,
    auc,
    average_precision,
    bleu,
    embed_similarity,
    rouge_l,
    threshold_curve,
)
from tracekit.setcover import CoverCandidate, minimum_cover
from tracekit.softscore import AnchorConfig, estimate_from_table


def test_criterion_1_probability_oracle_equivalence():
    """1000 random anchor-logit tables: estimator == direct evaluation to 1e-9,
    probabilities sum to 1, class swap and equal-count shift hold. < 5 s."""
    rng = random.Random(20260)
    anchors = AnchorConfig()
    start = time.monotonic()
    for _ in range(1000):
        fake = [rng.uniform(-10, 10) for _ in range(3)]
        real = [rng.uniform(-10, 10) for _ in range(3)]
        table = {"fake": fake[0], "Fake": fake[1], "FAKE": fake[2],
                 "real": real[0], "Real": real[1], "REAL": real[2]}

        p = estimate_from_table(table, anchors)
        direct = math.exp(sum(fake)) / (math.exp(sum(fake)) + math.exp(sum(real)))
        assert abs(p.p_fake - direct) < 1e-9
        assert abs(p.p_fake + p.p_real - 1.0) < 1e-12

        swapped = estimate_from_table(table, anchors.swapped())
        assert abs(p.p_fake - swapped.p_real) < 1e-12

        c = rng.uniform(-5, 5)
        shifted = estimate_from_table({k: v + c for k, v in table.items()}, anchors)
        assert abs(p.p_fake - shifted.p_fake) < 1e-12
    assert time.monotonic() - start < 5.0


def _random_cover_instance(rng):
    cats = list(palette())
    n = rng.randint(3, 20)
    candidates = []
    for i in range(n):
        size = rng.randint(1, 6) if rng.random() < 0.8 else rng.randint(6, 10)
        candidates.append(CoverCandidate.make(
            f"e{i:02d}", rng.sample(cats, size), positive=rng.random() < 0.5))
    # guarantee both polarities
    if not any(c.positive for c in candidates):
        candidates[0] = CoverCandidate.make(candidates[0].id, candidates[0].categories, True)
    if all(c.positive for c in candidates):
        candidates[-1] = CoverCandidate.make(candidates[-1].id, candidates[-1].categories, False)
    coverable = sorted(set().union(*(c.categories for c in candidates)))
    k = rng.randint(1, min(16, len(coverable)))
    return rng.sample(coverable, k), candidates


def _enumerate_minimum(target, candidates):
    target = set(target)
    ordered = sorted(candidates, key=lambda c: c.id)
    for size in range(1, len(ordered) + 1):
        for combo in itertools.combinations(ordered, size):
            if not any(c.positive for c in combo) or not any(not c.positive for c in combo):
                continue
            covered = set().union(*(c.categories for c in combo))
            if covered >= target:
                return tuple(c.id for c in combo)
    return None


def test_criterion_2_cover_exactness():
    """200 random registries (<=20 exemplars): DP cardinality equals exhaustive
    enumeration; constraints always satisfied. < 30 s."""
    rng = random.Random(41)
    start = time.monotonic()
    checked = 0
    while checked < 200:
        target, candidates = _random_cover_instance(rng)
        expected = _enumerate_minimum(target, candidates)
        if expected is None:
            continue  # infeasible draw (coverage hole); spec pre-condition excludes these
        solution = minimum_cover(target, candidates)
        assert solution.cardinality == len(expected)
        assert solution.ids == expected  # shared lexicographic tie rule
        assert solution.covered >= set(target)
        assert solution.has_positive and solution.has_negative
        checked += 1
    assert time.monotonic() - start < 30.0


def _ap_oracle(items):
    pool = list(items)
    order = []
    while pool:
        best = pool[0]
        for it in pool[1:]:
            if (it.score > best.score) or (it.score == best.score and it.id < best.id):
                best = it
        order.append(best)
        pool.remove(best)
    hits, acc = 0, 0.0
    for rank, it in enumerate(order, start=1):
        if it.label == "fake":
            hits += 1
            acc += hits / rank
    return acc / hits


def _auc_oracle(items):
    pos = [i.score for i in items if i.label == "fake"]
    neg = [i.score for i in items if i.label == "real"]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def test_criterion_3_ranking_metric_oracles():
    """AP and AUC match brute-force oracles on 100 random sets (<=50 items)
    within 1e-9, plus the stated special cases and the hand fixture."""
    rng = random.Random(8)
    done = 0
    while done < 100:
        n = rng.randint(2, 50)
        items = []
        for i in range(n):
            score = round(rng.random(), 2) if rng.random() < 0.4 else rng.random()
            items.append(ScoredItem(f"i{i:02d}", score, "fake" if rng.random() < 0.5 else "real"))
        if not {"fake", "real"} <= {i.label for i in items}:
            continue
        assert abs(average_precision(items) - _ap_oracle(items)) < 1e-9
        assert abs(auc(items) - _auc_oracle(items)) < 1e-9
        done += 1

    perfect = ([ScoredItem(f"p{i}", 0.9 + i / 1000, "fake") for i in range(3)]
               + [ScoredItem(f"n{i}", 0.1 + i / 1000, "real") for i in range(3)])
    assert average_precision(perfect) == 1.0
    assert auc(perfect) == 1.0
    tied = [ScoredItem(f"t{i}", 0.4, "fake" if i % 2 else "real") for i in range(6)]
    assert auc(tied) == 0.5

    fixture = [ScoredItem("a", 0.9, "fake"), ScoredItem("b", 0.8, "real"),
               ScoredItem("c", 0.7, "fake"), ScoredItem("d", 0.6, "real")]
    assert abs(average_precision(fixture) - 0.8333333333333333) < 1e-9


def test_criterion_4_overall_aggregation_published_row():
    avr = aggregate_overall(b1=0.434, b2=0.256, rouge_l=0.371, sim=0.704,
                            alpha=1.897, rho=1.608, kappa=1.901)
    assert abs(avr - 0.638) <= 0.0005


def test_criterion_5_preference_tally():
    votes = [TwoAfcVote(f"r{i % 6}", f"item{i}", "A") for i in range(595)]
    votes += [TwoAfcVote(f"r{i}", f"other{i}", "B") for i in range(5)]
    assert tally_2afc(votes, "A").percent == 99.17


def test_criterion_6_end_to_end_mock_pipeline(tmp_path):
    """20-image corpus through the CLI: 20 reasoning records, instruction
    counts equal quotas minus logged skips, byte-identical trees across two
    seeded runs. < 60 s."""
    from click.testing import CliRunner
    from tests.test_cli import prepare_pipeline_inputs, run_pipeline, tree_hash

    start = time.monotonic()
    runner = CliRunner()
    roots = [tmp_path / "runA", tmp_path / "runB"]
    outs = []
    for root in roots:
        prepare_pipeline_inputs(root, n_per_class=10)
        outs.append(run_pipeline(runner, root, seed=2026))

    chain = (outs[0] / "chain.jsonl").read_text().splitlines()
    assert len(chain) == 20

    items = (outs[0] / "instructions.jsonl").read_text().splitlines()
    skips_file = outs[0] / "instructions.jsonl.skips.jsonl"
    n_skips = len(skips_file.read_text().splitlines()) if skips_file.exists() else 0
    assert len(items) == 20 * (1 + 2 + 15 + 25) - n_skips

    per_part = {}
    for line in items:
        row = json.loads(line)
        per_part[row["part"]] = per_part.get(row["part"], 0) + 1
    assert per_part["P1_absolute"] == 20 * 1
    assert per_part["P2_holistic"] == 20 * 2
    assert per_part["P3_finegrained"] == 20 * 15
    assert per_part["P4_extensional"] == 20 * 25

    assert tree_hash(outs[0]) == tree_hash(outs[1])
    assert time.monotonic() - start < 60.0


def test_criterion_7_text_metric_fixtures():
    assert abs(bleu("the cat sat", "the cat slept", 1) - 0.6667) < 1e-4
    assert abs(rouge_l("a b c d", "a c d e") - 0.75) < 1e-9
    assert bleu("same words here", "same words here", 1) == 1.0
    assert rouge_l("same words here", "same words here") == 1.0
    gw = ScriptedGateway(seed=99)
    assert abs(embed_similarity("same words here", "same words here", gw) - 1.0) < 1e-9


def test_criterion_8_threshold_curve_endpoints():
    rng = random.Random(12)
    items = [ScoredItem(f"f{i}", rng.uniform(0.3, 0.9), "fake") for i in range(7)]
    items += [ScoredItem(f"r{i}", rng.uniform(0.1, 0.7), "real") for i in range(5)]
    grid = [0.0001] + [i / 100 for i in range(1, 100)] + [0.9999]
    curve = threshold_curve(items, grid)
    fake_prev = 7 / 12
    real_prev = 5 / 12
    assert abs(curve[0][1] - fake_prev) < 1e-12   # smallest threshold: everything fake
    assert abs(curve[-1][1] - real_prev) < 1e-12  # largest threshold: everything real


def _mcq(answer="A red apple.", distractors=("An orange.", "A pear.", "Grapes.")):
    options = (answer,) + distractors
    return InstructionRecord(id="m1", image_id="img-x", part="P3_finegrained", format="mcq",
                             question="Which fruit is shown?", answer=answer,
                             mcq_options=options, correct_index=0, rewriter_tag="rw")


def test_criterion_9_decontamination_properties():
    item = _mcq()
    neutral = InstructionRecord(id="n1", image_id="img-x", part="P3_finegrained",
                                format="yes_no", question="Is trace evidence visible?",
                                answer="Yes. Smearing shows.", rewriter_tag="rw")

    # scripted probe: 9 of 10 trials answer the MCQ correctly; margin 0.2 drops it
    transcript = {}
    for t in range(10):
        reply = "ANSWER: 0" if t != 3 else "ANSWER: 2"
        transcript[_probe_request(item, t).fingerprint()] = {"text": reply}
    for t in range(10):  # neutral item probes alternate yes/no (chance level)
        transcript[_probe_request(neutral, t).fingerprint()] = {"text": "yes" if t % 2 else "no"}
    gateway = ScriptedGateway(transcript=transcript, synthesize=False)

    result = decontaminate([item, neutral], gateway, k_trials=10, margin=0.2)
    assert len(result.kept) + len(result.dropped) == 2  # never grows
    assert [d.id for d in result.dropped] == ["m1"]
    assert [k.id for k in result.kept] == ["n1"]

    # idempotence against the same frozen transcript
    again = decontaminate(result.kept, ScriptedGateway(transcript=transcript, synthesize=False),
                          k_trials=10, margin=0.2)
    assert again.dropped == []
    assert again.kept == result.kept

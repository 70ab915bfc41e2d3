"""Evaluation walkthrough: detection metrics with threshold curves, word-level
and judge-based transparency metrics, and the normalized overall aggregate.

    python3 demos/06_evaluation.py
"""

import random

from tracekit.gateway import ScriptedGateway
from tracekit.metrics import (
    ScoredItem,
    TransparencyRow,
    accuracy,
    auc,
    average_precision,
    bleu,
    default_grid,
    embed_similarity,
    render_report,
    rouge_l,
    threshold_curve,
)

rng = random.Random(3)
items = [ScoredItem(f"f{i}", min(0.99, rng.gauss(0.75, 0.12)), "fake") for i in range(12)]
items += [ScoredItem(f"r{i}", max(0.01, rng.gauss(0.3, 0.12)), "real") for i in range(12)]

preds = ["fake" if it.score >= 0.5 else "real" for it in items]
print(f"detection on {len(items)} scored items:")
print(f"  accuracy@0.5 = {accuracy(preds, [it.label for it in items]):.4f}")
print(f"  AP  = {average_precision(items):.4f}")
print(f"  AUC = {auc(items):.4f}")

curve = threshold_curve(items, default_grid(19))
peak = max(curve, key=lambda ta: ta[1])
print(f"  threshold sweep: peak accuracy {peak[1]:.4f} at t={peak[0]:.2f}")
print("  curve extremes -> fake prevalence "
      f"{curve[0][1]:.2f} at t={curve[0][0]:.2f}, real prevalence {curve[-1][1]:.2f}"
      f" at t={curve[-1][0]:.2f}")

candidate = "the texture looks smeared and the edge bends oddly"
reference = "smeared texture and an oddly bending edge give it away"
gateway = ScriptedGateway(seed=12)
print("\ntransparency metrics for one response/reference pair:")
print(f"  BLEU-1 = {bleu(candidate, reference, 1):.4f}")
print(f"  BLEU-2 = {bleu(candidate, reference, 2):.4f}")
print(f"  ROUGE-L = {rouge_l(candidate, reference):.4f}")
print(f"  embed similarity = {embed_similarity(candidate, reference, gateway):.4f}")

row = TransparencyRow.from_components(
    b1=bleu(candidate, reference, 1), b2=bleu(candidate, reference, 2),
    rouge_l=rouge_l(candidate, reference),
    sim=embed_similarity(candidate, reference, gateway),
    alpha=1.9, rho=1.6, kappa=1.9)
print(f"  overall aggregate (judge scores rescaled /2): {row.avr:.4f}")

print("\nreport rendering is byte-stable; markdown flavor:")
print(render_report({"accuracy": round(accuracy(preds, [it.label for it in items]), 4),
                     "ap": round(average_precision(items), 4),
                     "auc": round(auc(items), 4)}, seed=3, fmt="markdown"))

"""Detection and transparency metrics plus the normalized overall aggregate.

Detection: accuracy, rank-walk average precision, Mann-Whitney AUC and
threshold-accuracy curves over fake-probability scores ("fake" is the positive
class). Transparency: BLEU-1/2, ROUGE-L F1, embedding similarity, judge-score
batching, and the seven-component overall mean with judge scores rescaled
from [0,2] to [0,1].

Text normalization (versioned, BLEU/ROUGE values depend on it): lowercase,
strip every non-alphanumeric character to a space, split on whitespace.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .gateway import Gateway, GatewayError, JudgeScore

NORMALIZATION_VERSION = "lowercase-punct-strip-whitespace-v1"
SIMILARITY_MAPPINGS = {True: "affine((1+cos)/2)", False: "raw-cosine"}


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class ScoredItem:
    id: str
    score: float  # p_fake in [0,1]
    label: str    # "fake" | "real"

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise MetricError(f"score for {self.id!r} is not finite")
        if self.label not in ("fake", "real"):
            raise MetricError(f"label must be fake/real, got {self.label!r}")


@dataclass(frozen=True)
class TransparencyRow:
    b1: float
    b2: float
    rouge_l: float
    sim: float
    alpha: float
    rho: float
    kappa: float
    avr: float

    @classmethod
    def from_components(cls, b1, b2, rouge_l, sim, alpha, rho, kappa) -> "TransparencyRow":
        avr = aggregate_overall(b1=b1, b2=b2, rouge_l=rouge_l, sim=sim,
                                alpha=alpha, rho=rho, kappa=kappa)
        return cls(b1, b2, rouge_l, sim, alpha, rho, kappa, avr)


# --- detection ---

def accuracy(predictions, labels) -> float:
    if len(predictions) != len(labels):
        raise MetricError(f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels")
    if not predictions:
        raise MetricError("empty inputs")
    return sum(p == t for p, t in zip(predictions, labels)) / len(predictions)


def average_precision(items) -> float:
    """Rank-walk AP: mean of precision-at-each-positive in descending score
    order, ties broken by ascending id (documented stable order)."""
    n_pos = sum(1 for it in items if it.label == "fake")
    if n_pos == 0:
        raise MetricError("average precision undefined without positives")
    ranked = sorted(items, key=lambda it: (-it.score, it.id))
    hits = 0
    total = 0.0
    for rank, it in enumerate(ranked, start=1):
        if it.label == "fake":
            hits += 1
            total += hits / rank
    return total / n_pos


def auc(items) -> float:
    """Mann-Whitney AUC: fraction of (positive, negative) pairs ranked
    correctly, tied scores counting 1/2."""
    pos = [it.score for it in items if it.label == "fake"]
    neg = [it.score for it in items if it.label == "real"]
    if not pos or not neg:
        raise MetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(pos + neg)  # average ranks implement the tie credit
    u = float(np.sum(ranks[: len(pos)])) - len(pos) * (len(pos) + 1) / 2.0
    return u / (len(pos) * len(neg))


def threshold_curve(items, grid) -> list[tuple[float, float]]:
    """(threshold, accuracy) per grid point with fake iff score >= threshold."""
    if not grid:
        raise MetricError("threshold grid is empty")
    if any(not 0.0 < t < 1.0 for t in grid):
        raise MetricError("grid thresholds must lie strictly inside (0,1)")
    if list(grid) != sorted(grid):
        raise MetricError("grid must be sorted ascending")
    if not items:
        raise MetricError("empty item list")
    curve = []
    for t in grid:
        preds = ["fake" if it.score >= t else "real" for it in items]
        curve.append((t, accuracy(preds, [it.label for it in items])))
    return curve


def default_grid(points: int = 99) -> list[float]:
    return [round((i + 1) / (points + 1), 12) for i in range(points)]


# --- word-level ---

def tokenize(text: str) -> list[str]:
    return re.sub(r"[^a-z0-9]+", " ", text.lower()).split()


def _ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def bleu(candidate: str, references, n: int = 1) -> float:
    """Modified n-gram precision with count clipping and brevity penalty,
    geometric mean over orders 1..n. `references` may be one string or a list."""
    if isinstance(references, str):
        references = [references]
    cand = tokenize(candidate)
    refs = [tokenize(r) for r in references]
    if not cand or not refs or all(not r for r in refs):
        raise MetricError("bleu requires non-empty candidate and references")

    precisions = []
    for order in range(1, n + 1):
        cand_ngrams = _ngrams(cand, order)
        if not cand_ngrams:
            precisions.append(0.0)
            continue
        counts: dict = {}
        for g in cand_ngrams:
            counts[g] = counts.get(g, 0) + 1
        clipped = 0
        for g, c in counts.items():
            best = max(sum(1 for h in _ngrams(r, order) if h == g) for r in refs)
            clipped += min(c, best)
        precisions.append(clipped / len(cand_ngrams))

    if any(p == 0.0 for p in precisions):
        return 0.0
    ref_len = min((len(r) for r in refs), key=lambda rl: (abs(rl - len(cand)), rl))
    bp = 1.0 if len(cand) > ref_len else math.exp(1.0 - ref_len / len(cand))
    return bp * math.exp(sum(math.log(p) for p in precisions) / n)


def rouge_l(candidate: str, reference: str) -> float:
    """LCS-based F1 with beta=1."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        raise MetricError("rouge_l requires non-empty inputs")
    # classic O(n*m) LCS table, rolling rows
    prev = [0] * (len(ref) + 1)
    for tok in cand:
        cur = [0]
        for j, rtok in enumerate(ref, start=1):
            cur.append(prev[j - 1] + 1 if tok == rtok else max(prev[j], cur[j - 1]))
        prev = cur
    lcs = prev[-1]
    if lcs == 0:
        return 0.0
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


# --- semantic-level ---

def similarity_mapping(gateway: Gateway) -> str:
    signed = getattr(gateway, "embedding_signed", True)
    return SIMILARITY_MAPPINGS[bool(signed)]


def embed_similarity(candidate: str, reference: str, gateway: Gateway) -> float:
    """Cosine of sentence embeddings, mapped to [0,1]. Backends that can emit
    negative components get the affine map (1+cos)/2; non-negative backends
    report the raw cosine. The active mapping is exposed via
    similarity_mapping() for reports."""
    a = np.asarray(gateway.embed(candidate), dtype=float)
    b = np.asarray(gateway.embed(reference), dtype=float)
    cos = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    cos = max(-1.0, min(1.0, cos))
    if getattr(gateway, "embedding_signed", True):
        return (1.0 + cos) / 2.0
    return cos


def judge_batch(responses, references, gateway: Gateway,
                rubric_template: str | None = None) -> dict:
    """Average judge scores across a batch; unparseable items are excluded and
    counted, and the batch is flagged when more than 10% fail."""
    if len(responses) != len(references):
        raise MetricError("responses and references must have equal length")
    if not responses:
        raise MetricError("empty judge batch")
    scores: list[JudgeScore] = []
    failures = 0
    for resp, ref in zip(responses, references):
        try:
            scores.append(gateway.judge(resp, ref, rubric_template))
        except GatewayError:
            failures += 1
    if not scores:
        raise MetricError("every judge call failed")
    return {
        "alpha_mean": sum(s.alpha for s in scores) / len(scores),
        "rho_mean": sum(s.rho for s in scores) / len(scores),
        "kappa_mean": sum(s.kappa for s in scores) / len(scores),
        "n_scored": len(scores),
        "n_failed": failures,
        "flagged": failures / len(responses) > 0.10,
    }


def aggregate_overall(*, b1: float, b2: float, rouge_l: float, sim: float,
                      alpha: float, rho: float, kappa: float) -> float:
    """Unweighted mean of the seven components with judge scores divided by 2."""
    for name, v in (("b1", b1), ("b2", b2), ("rouge_l", rouge_l), ("sim", sim),
                    ("alpha", alpha), ("rho", rho), ("kappa", kappa)):
        if v is None or not math.isfinite(v):
            raise MetricError(f"aggregate_overall missing component {name}")
    return (b1 + b2 + rouge_l + sim + alpha / 2.0 + rho / 2.0 + kappa / 2.0) / 7.0


# --- reports ---

def config_fingerprint(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")).hexdigest()


def render_report(metrics: dict, *, seed: int | None = None, profiles: dict | None = None,
                  config: dict | None = None, fmt: str = "json") -> str:
    """Stable-keyed report document. JSON renders byte-identically for equal
    bundles; markdown renders one table row per metric."""
    bundle = {
        "metrics": metrics,
        "seed": seed,
        "gateway_profiles": profiles or {},
        "config_fingerprint": config_fingerprint(config or {}),
        "normalization": NORMALIZATION_VERSION,
    }
    if fmt == "json":
        return json.dumps(bundle, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if fmt == "markdown":
        lines = ["| metric | value |", "| --- | --- |"]
        for key in sorted(metrics):
            lines.append(f"| {key} | {metrics[key]} |")
        lines.append("")
        lines.append(f"seed: {seed}; config: {bundle['config_fingerprint'][:12]}; "
                     f"normalization: {NORMALIZATION_VERSION}")
        return "\n".join(lines) + "\n"
    raise MetricError(f"unknown report format {fmt!r}")


def emit_report(metrics: dict, out_path: str | Path, *, seed: int | None = None,
                profiles: dict | None = None, config: dict | None = None,
                fmt: str = "json") -> Path:
    out_path = Path(out_path)
    try:
        out_path.write_text(render_report(metrics, seed=seed, profiles=profiles,
                                          config=config, fmt=fmt), encoding="utf-8")
    except OSError as exc:
        raise MetricError(f"cannot write report: {exc}") from exc
    return out_path

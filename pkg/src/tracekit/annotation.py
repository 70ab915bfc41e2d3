"""Human expert feedback: dual annotations, exemplar registry, 2AFC voting.

Implements the intersection rule for dual-annotated images (only categories
both experts selected survive, and only when both verdicts match the ground
truth), the demonstration registry with its per-category coverage constraint,
and preference-vote tallying. Ground-truth authenticity always comes from the
corpus record; annotations never overwrite it.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import categories as cat
from .corpus import Corpus
from .setcover import CoverCandidate

MIN_EXEMPLARS_PER_CATEGORY = 3

MERGE_ACCEPTED = "accepted"
MERGE_WRONG_VERDICT = "rejected_wrong_verdict"
MERGE_EMPTY_INTERSECTION = "rejected_empty_intersection"


class AnnotationError(Exception):
    pass


class UnknownCategory(AnnotationError):
    def __init__(self, token: str):
        self.token = token
        super().__init__(f"unknown trace-evidence category: {token!r}")


class UnknownImage(AnnotationError):
    pass


class ProtocolError(AnnotationError):
    """Wrong number of annotations for a merge, or similar protocol misuse."""


class DuplicateExemplar(AnnotationError):
    pass


class VoteConflict(AnnotationError):
    pass


@dataclass(frozen=True)
class ExpertAnnotation:
    image_id: str
    annotator_id: str
    verdict: str  # "fake" | "real"
    categories: frozenset
    notes: str | None = None
    timestamp: str | None = None

    def __post_init__(self):
        if self.verdict not in ("fake", "real"):
            raise AnnotationError(f"verdict must be fake/real, got {self.verdict!r}")
        if not self.categories:
            raise AnnotationError("a supported verdict needs at least one category")


@dataclass(frozen=True)
class MergedAnnotation:
    image_id: str
    categories: frozenset
    status: str


@dataclass(frozen=True)
class Exemplar:
    exemplar_id: str
    image_id: str
    polarity: str  # "positive" (fake) | "negative" (real)
    reasoning_text: str
    covered: frozenset

    def __post_init__(self):
        if self.polarity not in ("positive", "negative"):
            raise AnnotationError(f"polarity must be positive/negative, got {self.polarity!r}")
        if not self.reasoning_text.strip():
            raise AnnotationError("exemplar reasoning_text must be non-empty")
        if not self.covered:
            raise AnnotationError("exemplar covered set must be non-empty")


@dataclass(frozen=True)
class TwoAfcVote:
    rater_id: str
    item_id: str
    choice: str  # "A" | "B"

    def __post_init__(self):
        if self.choice not in ("A", "B"):
            raise AnnotationError(f"choice must be A or B, got {self.choice!r}")


@dataclass(frozen=True)
class TallyResult:
    preferred: str
    n_votes: int
    n_preferred: int

    @property
    def rate(self) -> float:
        return self.n_preferred / self.n_votes

    @property
    def percent(self) -> float:
        """Preference rate as a percentage, 2-decimal rounding."""
        return round(self.rate * 100.0, 2)


@dataclass
class CoverageReport:
    per_category_counts: dict
    violations: list
    has_positive: bool
    has_negative: bool

    @property
    def ok(self) -> bool:
        return not self.violations and self.has_positive and self.has_negative


def tally_2afc(votes, preferred: str) -> TallyResult:
    """Preference rate for `preferred` over a non-empty vote list.
    Permutation-invariant; one vote per (rater, item) is the caller's contract."""
    if preferred not in ("A", "B"):
        raise AnnotationError(f"preferred must be A or B, got {preferred!r}")
    votes = list(votes)
    if not votes:
        raise AnnotationError("cannot tally an empty vote list")
    n_pref = sum(1 for v in votes if v.choice == preferred)
    return TallyResult(preferred=preferred, n_votes=len(votes), n_preferred=n_pref)


class ExemplarRegistry:
    """Demonstration exemplars keyed by id, at most one per image."""

    def __init__(self):
        self._by_id: dict[str, Exemplar] = {}
        self._images: set[str] = set()
        self._seq = 0

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(sorted(self._by_id.values(), key=lambda e: e.exemplar_id))

    def get(self, exemplar_id: str) -> Exemplar | None:
        return self._by_id.get(exemplar_id)

    def next_id(self) -> str:
        self._seq += 1
        return f"ex-{self._seq:04d}"

    def register(self, exemplar: Exemplar) -> str:
        """Add one exemplar. The declared covered set is lexically
        sanity-checked: every category must be evidenced by a lexicon keyword
        in the reasoning text."""
        bad = cat.validate_categories(exemplar.covered)
        if bad:
            raise UnknownCategory(bad[0])
        if exemplar.image_id in self._images:
            raise DuplicateExemplar(f"image {exemplar.image_id!r} already has an exemplar")
        if exemplar.exemplar_id in self._by_id:
            raise DuplicateExemplar(f"exemplar id {exemplar.exemplar_id!r} already registered")
        unsupported = cat.uncovered_categories(exemplar.reasoning_text, exemplar.covered)
        if unsupported:
            raise AnnotationError(
                f"declared categories not evidenced in reasoning text: {unsupported}")
        self._by_id[exemplar.exemplar_id] = exemplar
        self._images.add(exemplar.image_id)
        return exemplar.exemplar_id

    def balance(self) -> dict:
        pos = sum(1 for e in self._by_id.values() if e.polarity == "positive")
        neg = len(self._by_id) - pos
        return {"positive": pos, "negative": neg, "balanced": pos == neg and pos > 0}

    def coverage(self) -> CoverageReport:
        """Per-category exemplar counts; a violation for every category backed
        by fewer than three exemplars, plus polarity presence."""
        counts = {c: 0 for c in cat.palette()}
        for e in self._by_id.values():
            for c in e.covered:
                counts[c] += 1
        violations = [
            {"category": c, "count": counts[c], "required": MIN_EXEMPLARS_PER_CATEGORY}
            for c in cat.palette() if counts[c] < MIN_EXEMPLARS_PER_CATEGORY
        ]
        return CoverageReport(
            per_category_counts=counts,
            violations=violations,
            has_positive=any(e.polarity == "positive" for e in self._by_id.values()),
            has_negative=any(e.polarity == "negative" for e in self._by_id.values()),
        )

    def cover_candidates(self) -> list[CoverCandidate]:
        return [CoverCandidate(id=e.exemplar_id, categories=e.covered,
                               positive=e.polarity == "positive")
                for e in self]


class AnnotationStore:
    """Annotation state for one corpus, optionally persisted as JSONL appends.

    Writes are serialized behind one lock (a production-scale store would shard
    per image id); reads take no lock.
    """

    def __init__(self, corpus: Corpus, state_dir: str | Path | None = None):
        self.corpus = corpus
        self.state_dir = Path(state_dir) if state_dir else None
        self.annotations: dict[str, dict[str, ExpertAnnotation]] = {}
        self.audit_log: list[dict] = []
        self.registry = ExemplarRegistry()
        self.votes: dict[tuple[str, str], TwoAfcVote] = {}
        self.requeue: set[str] = set()
        self._lock = threading.RLock()
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            self._replay()

    # persistence ---------------------------------------------------------

    def _append(self, filename: str, obj: dict) -> None:
        if not self.state_dir:
            return
        with open(self.state_dir / filename, "a", encoding="utf-8") as f:
            f.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")

    def _replay(self) -> None:
        def rows(name):
            path = self.state_dir / name
            if not path.exists():
                return
            with open(path, encoding="utf-8") as f:
                for line in f:
                    if line.strip():
                        yield json.loads(line)

        for row in rows("annotations.jsonl"):
            a = ExpertAnnotation(image_id=row["image_id"], annotator_id=row["annotator_id"],
                                 verdict=row["verdict"], categories=frozenset(row["categories"]),
                                 notes=row.get("notes"), timestamp=row.get("timestamp"))
            self.annotations.setdefault(a.image_id, {})[a.annotator_id] = a
        for row in rows("exemplars.jsonl"):
            e = Exemplar(exemplar_id=row["exemplar_id"], image_id=row["image_id"],
                         polarity=row["polarity"], reasoning_text=row["reasoning_text"],
                         covered=frozenset(row["covered"]))
            self.registry.register(e)
        for row in rows("votes.jsonl"):
            v = TwoAfcVote(rater_id=row["rater_id"], item_id=row["item_id"], choice=row["choice"])
            self.votes[(v.rater_id, v.item_id)] = v

    # annotations ---------------------------------------------------------

    def submit_annotation(self, a: ExpertAnnotation) -> dict:
        """Store one expert annotation; verdict checked against the corpus
        ground truth. A repeated (image, annotator) pair replaces the earlier
        annotation and leaves an audit entry."""
        bad = cat.validate_categories(a.categories)
        if bad:
            raise UnknownCategory(bad[0])
        record = self.corpus.get(a.image_id)
        if record is None:
            raise UnknownImage(f"image {a.image_id!r} not in corpus")
        if a.timestamp is None:
            a = ExpertAnnotation(a.image_id, a.annotator_id, a.verdict, a.categories,
                                 a.notes, time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
        with self._lock:
            prior = self.annotations.get(a.image_id, {}).get(a.annotator_id)
            if prior is not None:
                self.audit_log.append({
                    "event": "annotation_replaced", "image_id": a.image_id,
                    "annotator_id": a.annotator_id,
                    "prior_verdict": prior.verdict,
                    "prior_categories": cat.canonical_order(prior.categories)})
                self._append("audit.jsonl", self.audit_log[-1])
            self.annotations.setdefault(a.image_id, {})[a.annotator_id] = a
            self.requeue.discard(a.image_id)  # a fresh attempt supersedes the requeue
            self._append("annotations.jsonl", {
                "image_id": a.image_id, "annotator_id": a.annotator_id, "verdict": a.verdict,
                "categories": cat.canonical_order(a.categories), "notes": a.notes,
                "timestamp": a.timestamp})
        return {"verdict_correct": a.verdict == record.auth}

    def annotations_for(self, image_id: str) -> list[ExpertAnnotation]:
        return sorted(self.annotations.get(image_id, {}).values(), key=lambda a: a.annotator_id)

    def merge_dual(self, image_id: str) -> MergedAnnotation:
        """Intersection merge of exactly two annotations. Accepted only when
        both verdicts equal ground truth and the intersection is non-empty;
        rejected images go back on the queue."""
        pair = self.annotations_for(image_id)
        if len(pair) != 2:
            raise ProtocolError(f"merge needs exactly 2 annotations for {image_id!r}, found {len(pair)}")
        record = self.corpus.get(image_id)
        if record is None:
            raise UnknownImage(f"image {image_id!r} not in corpus")
        with self._lock:
            intersection = frozenset(pair[0].categories & pair[1].categories)
            if any(a.verdict != record.auth for a in pair):
                status, kept = MERGE_WRONG_VERDICT, frozenset()
            elif not intersection:
                status, kept = MERGE_EMPTY_INTERSECTION, frozenset()
            else:
                status, kept = MERGE_ACCEPTED, intersection
            if status != MERGE_ACCEPTED:
                self.requeue.add(image_id)
            return MergedAnnotation(image_id=image_id, categories=kept, status=status)

    def merged_notes(self, image_id: str) -> str:
        """Expert free-text notes, concatenated verbatim in annotator order."""
        return "\n".join(a.notes for a in self.annotations_for(image_id) if a.notes)

    def queue_for(self, annotator_id: str) -> list:
        """Corpus images this annotator has not yet annotated, plus requeued
        images (stable id order)."""
        done = {img for img, per in self.annotations.items()
                if annotator_id in per and img not in self.requeue}
        return [r for r in self.corpus.records() if r.id not in done]

    # exemplars -----------------------------------------------------------

    def register_exemplar(self, exemplar: Exemplar) -> str:
        with self._lock:
            eid = self.registry.register(exemplar)
            self._append("exemplars.jsonl", {
                "exemplar_id": exemplar.exemplar_id, "image_id": exemplar.image_id,
                "polarity": exemplar.polarity, "reasoning_text": exemplar.reasoning_text,
                "covered": cat.canonical_order(exemplar.covered)})
            return eid

    def validate_coverage(self) -> CoverageReport:
        return self.registry.coverage()

    # 2AFC ----------------------------------------------------------------

    def cast_vote(self, vote: TwoAfcVote) -> dict:
        """Record one preference vote. Re-sending the same choice is
        idempotent; a different choice for the same (rater, item) conflicts."""
        key = (vote.rater_id, vote.item_id)
        with self._lock:
            existing = self.votes.get(key)
            if existing is not None:
                if existing.choice == vote.choice:
                    return {"status": "duplicate"}
                raise VoteConflict(f"rater {vote.rater_id!r} already voted "
                                   f"{existing.choice!r} on {vote.item_id!r}")
            self.votes[key] = vote
            self._append("votes.jsonl", {"rater_id": vote.rater_id, "item_id": vote.item_id,
                                         "choice": vote.choice})
            return {"status": "recorded"}

    def tally(self, preferred: str) -> TallyResult:
        return tally_2afc(list(self.votes.values()), preferred)

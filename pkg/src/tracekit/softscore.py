"""Token soft-scoring: turn anchor-token logits into fake/real probabilities.

The detector issues a fixed two-turn prompt, reads the token table at the
authenticity-token position, sums logits over the case variants of each class
anchor, and softmax-normalizes the two class sums. A max-shift keeps the
exponentials overflow-safe without changing the result. Also provides the
qualitative path: parsing a free-text verdict with a negation-aware polarity
lexicon.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .categories import FAKE_TOKENS, NEGATION_TOKENS, REAL_TOKENS
from .gateway import ChatMessage, ChatRequest, Gateway

AUTH_QUESTION = "What is the authenticity of this image?"
AUTH_ANSWER_PREFIX = "This image is"

MISSING_TOKEN_PENALTY = 10.0
NEGATION_WINDOW = 3


class SoftScoreError(Exception):
    pass


class EstimateRefused(SoftScoreError):
    """No anchor token found in the returned table at all."""


@dataclass(frozen=True)
class AnchorConfig:
    fake_variants: tuple[str, ...] = ("fake", "Fake", "FAKE")
    real_variants: tuple[str, ...] = ("real", "Real", "REAL")

    def __post_init__(self):
        if not self.fake_variants or not self.real_variants:
            raise ValueError("anchor variant lists must be non-empty")
        if len(self.fake_variants) != len(self.real_variants):
            raise ValueError("anchor classes need equal variant counts (shift invariance)")
        if set(self.fake_variants) & set(self.real_variants):
            raise ValueError("anchor variant lists must be disjoint")

    def swapped(self) -> "AnchorConfig":
        return AnchorConfig(fake_variants=self.real_variants, real_variants=self.fake_variants)


@dataclass(frozen=True)
class ProbabilityEstimate:
    p_fake: float
    p_real: float
    raw: dict  # token -> logit actually used
    missing_tokens: tuple[str, ...] = ()


@dataclass(frozen=True)
class Verdict:
    label: str  # "fake" | "real" | "unparseable"
    evidence_snippet: str


def auth_request(image_ref: str, top_k: int = 20) -> ChatRequest:
    """The standardized two-turn detection prompt; logits are read at the
    position right after the assistant prefix."""
    return ChatRequest(
        messages=(ChatMessage("user", f"<Image> {AUTH_QUESTION}"),
                  ChatMessage("assistant", AUTH_ANSWER_PREFIX)),
        image_refs=(image_ref,),
        want_logprobs=True,
        top_k_logprobs=top_k,
    )


def estimate_from_table(entries: dict, anchors: AnchorConfig | None = None) -> ProbabilityEstimate:
    """Pure core: class probabilities from one token->logit table.

        p_class = exp(sum of class variant logits) / sum over classes

    Anchors absent from the table fall back to leading-space aliases, then to
    a finite floor (min returned logit - 10) and are reported in
    missing_tokens.
    """
    anchors = anchors or AnchorConfig()
    if not entries:
        raise EstimateRefused("empty token table")
    floor = min(entries.values()) - MISSING_TOKEN_PENALTY

    raw: dict = {}
    missing: list[str] = []

    def lookup(token: str) -> float:
        if token in entries:
            return entries[token]
        if " " + token in entries:  # tokenizers often keep the leading space
            return entries[" " + token]
        missing.append(token)
        return floor

    fake_sum = 0.0
    for tok in anchors.fake_variants:
        raw[tok] = lookup(tok)
        fake_sum += raw[tok]
    real_sum = 0.0
    for tok in anchors.real_variants:
        raw[tok] = lookup(tok)
        real_sum += raw[tok]

    if len(missing) == len(anchors.fake_variants) + len(anchors.real_variants):
        raise EstimateRefused(
            f"none of the anchor tokens {anchors.fake_variants + anchors.real_variants} "
            f"appear in the returned top-k table (size {len(entries)})")

    shift = max(fake_sum, real_sum)
    e_fake = math.exp(fake_sum - shift)
    e_real = math.exp(real_sum - shift)
    p_fake = e_fake / (e_fake + e_real)
    return ProbabilityEstimate(p_fake=p_fake, p_real=1.0 - p_fake, raw=raw,
                               missing_tokens=tuple(missing))


def estimate(image_ref: str, gateway: Gateway, anchors: AnchorConfig | None = None,
             top_k: int = 20) -> ProbabilityEstimate:
    result = gateway.chat(auth_request(image_ref, top_k))
    if not result.logprobs:
        raise EstimateRefused("gateway returned no token table")
    return estimate_from_table(result.logprobs[0].entries, anchors)


def classify(p: ProbabilityEstimate | float, threshold: float = 0.5) -> str:
    """fake iff p_fake >= threshold (ties go to fake)."""
    if not 0.0 < threshold < 1.0:
        raise SoftScoreError(f"threshold must lie in (0,1), got {threshold}")
    p_fake = p.p_fake if isinstance(p, ProbabilityEstimate) else float(p)
    return "fake" if p_fake >= threshold else "real"


_WORD = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")


def parse_polarity(text: str) -> tuple[str | None, str]:
    """Resolve fake/real polarity of a reply with a 3-token negation window.

    Returns (label or None, evidence snippet). Conflicting resolved signals
    yield None.
    """
    tokens = _WORD.findall(text.lower())
    signals = []
    for i, tok in enumerate(tokens):
        polarity = "fake" if tok in FAKE_TOKENS else "real" if tok in REAL_TOKENS else None
        if polarity is None:
            continue
        window = tokens[max(0, i - NEGATION_WINDOW):i]
        if any(w in NEGATION_TOKENS for w in window):
            polarity = "real" if polarity == "fake" else "fake"
        signals.append((polarity, tok))
    if not signals or len({p for p, _ in signals}) > 1:
        return None, text[:120]
    label, tok = signals[0]
    m = re.search(re.escape(tok), text, re.IGNORECASE)
    start = max(0, (m.start() if m else 0) - 40)
    return label, text[start:start + 100]


def qualitative_verdict(image_ref: str, gateway: Gateway, question: str = AUTH_QUESTION) -> Verdict:
    reply = gateway.chat(ChatRequest(
        messages=(ChatMessage("user", f"<Image> {question}"),),
        image_refs=(image_ref,))).text
    label, snippet = parse_polarity(reply)
    if label is None:
        return Verdict(label="unparseable", evidence_snippet=reply[:120])
    return Verdict(label=label, evidence_snippet=snippet)

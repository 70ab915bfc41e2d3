"""Exact constrained minimum set cover over trace-evidence categories.

Selects the smallest exemplar subset whose combined categories cover a target
set, subject to containing at least one positive (fake) and one negative
(real) exemplar. Exact optimum via breadth-first dynamic programming over
16-bit coverage masks plus a 2-bit polarity state; ties between equal-size
covers break to the lexicographically smallest sorted id tuple.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class CoverError(Exception):
    pass


class UncoverableCategory(CoverError):
    def __init__(self, category: str):
        self.category = category
        super().__init__(f"no exemplar covers category {category!r}")


class MissingPolarity(CoverError):
    def __init__(self, polarity: str):
        self.polarity = polarity
        super().__init__(f"registry has no {polarity} exemplar")


@dataclass(frozen=True)
class CoverCandidate:
    id: str
    categories: frozenset
    positive: bool

    @classmethod
    def make(cls, id: str, categories: Iterable[str], positive: bool) -> "CoverCandidate":
        return cls(id=id, categories=frozenset(categories), positive=positive)


@dataclass(frozen=True)
class CoverSolution:
    ids: tuple[str, ...]
    covered: frozenset
    has_positive: bool
    has_negative: bool

    @property
    def cardinality(self) -> int:
        return len(self.ids)


def _polarity_bits(candidate: CoverCandidate) -> int:
    return 1 if candidate.positive else 2


def minimum_cover(target: Iterable[str], candidates: Sequence[CoverCandidate]) -> CoverSolution:
    """Exact minimum-cardinality cover of `target` with both polarities present.

    Raises UncoverableCategory when some target category appears in no
    candidate, MissingPolarity when all candidates share one polarity.
    """
    target = set(target)
    if not target:
        raise CoverError("target category set is empty")
    if len({c.id for c in candidates}) != len(candidates):
        raise CoverError("candidate ids must be unique")
    if not any(c.positive for c in candidates):
        raise MissingPolarity("positive")
    if not any(not c.positive for c in candidates):
        raise MissingPolarity("negative")
    coverable = set().union(*(c.categories for c in candidates))
    for cat in sorted(target):
        if cat not in coverable:
            raise UncoverableCategory(cat)

    bit = {cat: i for i, cat in enumerate(sorted(target))}
    full = (1 << len(bit)) - 1
    ordered = sorted(candidates, key=lambda c: c.id)
    moves = [(sum(1 << bit[cat] for cat in c.categories if cat in bit), _polarity_bits(c))
             for c in ordered]

    optimum = _min_cardinality(full, moves)
    ids = _lexicographic_cover(full, ordered, moves, optimum)

    chosen = [c for c in ordered if c.id in ids]
    return CoverSolution(
        ids=tuple(ids),
        covered=frozenset().union(*(c.categories for c in chosen)),
        has_positive=any(c.positive for c in chosen),
        has_negative=any(not c.positive for c in chosen),
    )


def _min_cardinality(full: int, moves: list[tuple[int, int]]) -> int:
    """BFS over (coverage mask, polarity bits) states; level of first goal hit
    is the exact minimum cardinality."""
    goal = (full, 3)
    frontier = {(0, 0)}
    seen = {(0, 0)}
    level = 0
    while frontier:
        if goal in frontier:
            return level
        nxt = set()
        for mask, pol in frontier:
            for cmask, cpol in moves:
                state = (mask | cmask, pol | cpol)
                if state not in seen:
                    seen.add(state)
                    nxt.add(state)
        frontier = nxt
        level += 1
    raise CoverError("unreachable: feasibility was prechecked")


def _lexicographic_cover(full: int, ordered: Sequence[CoverCandidate],
                         moves: list[tuple[int, int]], size: int) -> list[str]:
    """First feasible `size`-subset in lexicographic order of sorted id tuples.

    DFS over candidates in ascending id order with suffix-reachability pruning;
    visiting order equals itertools.combinations order, so the first hit is the
    lexicographic minimum among all minimum-cardinality covers.
    """
    n = len(ordered)
    suffix_mask = [0] * (n + 1)
    suffix_pol = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix_mask[i] = suffix_mask[i + 1] | moves[i][0]
        suffix_pol[i] = suffix_pol[i + 1] | moves[i][1]

    chosen: list[int] = []

    def dfs(start: int, mask: int, pol: int) -> bool:
        if len(chosen) == size:
            return mask == full and pol == 3
        remaining = size - len(chosen)
        for j in range(start, n - remaining + 1):
            if (mask | suffix_mask[j]) != full or (pol | suffix_pol[j]) != 3:
                break  # suffixes only shrink from here on
            chosen.append(j)
            if dfs(j + 1, mask | moves[j][0], pol | moves[j][1]):
                return True
            chosen.pop()
        return False

    if not dfs(0, 0, 0):
        raise CoverError("no cover at computed optimum; solver invariant broken")
    return [ordered[j].id for j in chosen]

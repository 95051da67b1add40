"""Corpus distillation: pick a subset of seeds that keeps every edge.

Four strategies plus an exhaustive minimum-cover oracle for small corpora.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .corpus import InstanceCorpus
from .distributor import distribute
from .errors import CorpusTooLargeError, InvalidInputError

ALGORITHMS = ("ours", "unweighted", "time", "size")
ORACLE_LIMIT = 20


@dataclass(frozen=True)
class DistillOutcome:
    picked: tuple
    covered: frozenset
    algorithm: str

    def to_json(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "picked_count": len(self.picked),
            "picked": list(self.picked),
            "edge_count": len(self.covered),
        }


def _seeds(corpus):
    return list(corpus.seeds if isinstance(corpus, InstanceCorpus) else corpus)


def _union(seeds):
    out = set()
    for s in seeds:
        out |= s.edges
    return frozenset(out)


def distill_unweighted(corpus) -> DistillOutcome:
    """Greedy: always take the seed adding the most uncovered edges."""
    seeds = _seeds(corpus)
    uncovered = set(_union(seeds))
    picked = []
    pool = [s for s in seeds if s.edges]
    while uncovered:
        best = min(
            pool,
            key=lambda s: (-len(s.edges & uncovered), -s.birth, s.content_hash),
        )
        picked.append(best.name)
        uncovered -= best.edges
        pool.remove(best)
    return DistillOutcome(tuple(picked), _union(seeds), "unweighted")


def _per_edge(seeds, weight, algorithm):
    edges = _union(seeds)
    covered = set()
    picked = []
    for e in sorted(edges):
        if e in covered:
            continue
        best = min((s for s in seeds if e in s.edges), key=weight)
        picked.append(best.name)
        covered |= best.edges
    return DistillOutcome(tuple(picked), frozenset(covered), algorithm)


def distill_time_weighted(corpus) -> DistillOutcome:
    """For each uncovered edge, in edge order, take the fastest seed covering it."""
    seeds = _seeds(corpus)
    if seeds and not any(s.exec_time for s in seeds):
        raise InvalidInputError("no seed carries an execution time; time weighting is meaningless")
    return _per_edge(seeds, lambda s: (s.exec_time, s.size_bytes, s.content_hash), "time")


def distill_size_weighted(corpus) -> DistillOutcome:
    """afl-cmin style: for each uncovered edge take the smallest covering seed."""
    seeds = _seeds(corpus)
    return _per_edge(seeds, lambda s: (s.size_bytes, s.exec_time, s.content_hash), "size")


def distill_ours(corpus, rng_seed: int = 0) -> DistillOutcome:
    """Task distribution with a single instance."""
    seeds = _seeds(corpus)
    if not any(s.edges for s in seeds):
        return DistillOutcome((), frozenset(), "ours")
    if isinstance(corpus, InstanceCorpus):
        single = InstanceCorpus(0, corpus.seeds, corpus.name)
    else:
        single = InstanceCorpus(0, tuple(seeds))
    result = distribute([single], rng_seed)
    picked = result.selected(0)
    names = set(picked)
    return DistillOutcome(
        tuple(picked), _union(s for s in seeds if s.name in names), "ours"
    )


def optimal_cover_oracle(corpus) -> DistillOutcome:
    """Smallest covering subset by exhaustive search.

    Among minimum covers the lexicographically smallest tuple of sorted seed
    names wins.
    """
    seeds = sorted(_seeds(corpus), key=lambda s: s.name)
    if len(seeds) > ORACLE_LIMIT:
        raise CorpusTooLargeError(
            f"oracle refuses corpora above {ORACLE_LIMIT} seeds (got {len(seeds)})"
        )
    universe = sorted(_union(seeds))
    bit = {e: 1 << i for i, e in enumerate(universe)}
    masks = [sum(bit[e] for e in s.edges) for s in seeds]
    full = (1 << len(universe)) - 1
    for k in range(len(seeds) + 1):
        for combo in combinations(range(len(seeds)), k):
            m = 0
            for i in combo:
                m |= masks[i]
            if m == full:
                picked = tuple(seeds[i].name for i in combo)
                return DistillOutcome(picked, frozenset(universe), "oracle")
    raise AssertionError("the full corpus always covers its own edges")


def distill(corpus, algorithm: str, rng_seed: int = 0) -> DistillOutcome:
    if algorithm == "ours":
        return distill_ours(corpus, rng_seed)
    if algorithm == "unweighted":
        return distill_unweighted(corpus)
    if algorithm == "time":
        return distill_time_weighted(corpus)
    if algorithm == "size":
        return distill_size_weighted(corpus)
    raise InvalidInputError(f"unknown distillation algorithm {algorithm!r}")

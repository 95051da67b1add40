"""Edge-coverage-based task distribution across parallel fuzzing instances.

Overlap phase: the edges every (non-empty) instance has reached are organised
into a CFG. Repeatedly take the deepest leaf, draw an instance uniformly at
random, and give it the seed from its own queue that reaches the leaf and
covers the most still-undistributed edges, preferring younger seeds on ties.
Everything that seed covers is then removed from the graph.

Tail phase: each instance keeps, youngest first, every seed that covers an
edge outside the shared set which its current selection does not cover yet.
"""

from __future__ import annotations

import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .cfg import Cfg, build_cfg, deepest_leaf, depth_map
from .coverage import instance_edges, intersect_all
from .corpus import InstanceCorpus, SeedRecord
from .errors import IntegrityError, InvalidInputError, SeedNotFoundError

log = logging.getLogger(__name__)

RNG_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class Pick:
    leaf: int
    drawn: int  # instance returned by the uniform draw
    instance: int  # instance that received the seed (differs only on fallback)
    seed: str
    content_hash: str
    removed: frozenset

    def to_json(self) -> dict:
        return {
            "leaf": f"{self.leaf:016x}",
            "instance": self.instance,
            "seed": self.seed,
            "removed_edge_count": len(self.removed),
        }


@dataclass
class DistributionResult:
    assigned: list  # per instance: list of seed names picked in the overlap phase
    picks: list
    preserved: list  # per instance: list of seed names kept by the tail phase
    rng_seed: int
    overlap_size: int = 0
    excluded: list = field(default_factory=list)  # (instance, name) with empty traces

    @property
    def n(self) -> int:
        return len(self.assigned)

    def selected(self, instance: int) -> list:
        return list(self.assigned[instance]) + list(self.preserved[instance])

    def draws(self) -> list:
        return [p.drawn for p in self.picks]

    def to_json(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "overlap_edges": self.overlap_size,
            "assigned": [list(a) for a in self.assigned],
            "preserved": [list(p) for p in self.preserved],
            "excluded": [list(x) for x in self.excluded],
            "picks": [p.to_json() for p in self.picks],
        }


@dataclass
class PropertyReport:
    p1_ok: bool
    p2_ok: bool
    p3_stats: dict
    problems: list = field(default_factory=list)


def _eligible(corpora):
    """Drop seeds whose traces are empty; they carry no edge to distribute."""
    out, excluded = [], []
    for i, c in enumerate(corpora):
        keep = []
        for s in c.seeds:
            if s.trace.edges:
                keep.append(s)
            else:
                excluded.append((i, s.name))
        out.append(keep)
    return out, excluded


def _pick_key(seed: SeedRecord, remaining: frozenset):
    # most remaining coverage, then youngest, then smallest content hash
    return (-len(seed.edges & remaining), -seed.birth, seed.content_hash)


def _covers_leaf(seed, into_leaf):
    return not seed.edges.isdisjoint(into_leaf)


def pick_seed_for_leaf(cfg_remaining: Cfg, leaf: int, corpus_k) -> SeedRecord:
    """Choose the seed of one instance that will take over ``leaf``.

    Candidates must cover an edge into ``leaf`` that is still in the graph.
    """
    seeds = corpus_k.seeds if isinstance(corpus_k, InstanceCorpus) else corpus_k
    into_leaf = cfg_remaining.in_edges(leaf)
    candidates = [s for s in seeds if _covers_leaf(s, into_leaf)]
    if not candidates:
        raise SeedNotFoundError(f"no seed covers an edge into {leaf:016x}")
    remaining = cfg_remaining.edges
    return min(candidates, key=lambda s: _pick_key(s, remaining))


def preserve_tail(corpora, overlap_edges: frozenset, partial: DistributionResult) -> DistributionResult:
    """Add, per instance and youngest first, seeds that still bring unshared edges.

    A seed whose content was already handed to another instance is skipped;
    that copy already covers the same edges.
    """
    seeds_per, _ = _eligible(corpora)
    taken = {}  # content hash -> instance
    for i, seeds in enumerate(seeds_per):
        chosen = set(partial.assigned[i])
        for s in seeds:
            if s.name in chosen:
                taken.setdefault(s.content_hash, i)
    preserved = []
    for i, seeds in enumerate(seeds_per):
        chosen = set(partial.assigned[i])
        covered = set()
        for s in seeds:
            if s.name in chosen:
                covered |= s.edges
        kept = []
        for s in sorted(seeds, key=lambda s: s.birth, reverse=True):
            if s.name in chosen or taken.get(s.content_hash, i) != i:
                continue
            if s.edges - overlap_edges and s.edges - covered:
                kept.append(s.name)
                chosen.add(s.name)
                covered |= s.edges
                taken[s.content_hash] = i
        preserved.append(kept)
    partial.preserved = preserved
    return partial


def distribute(corpora, rng_seed: int) -> DistributionResult:
    corpora = list(corpora)
    if not corpora:
        raise InvalidInputError("distribute needs at least one corpus")
    seeds_per, excluded = _eligible(corpora)
    active = [i for i, seeds in enumerate(seeds_per) if seeds]
    if not active:
        raise InvalidInputError("every corpus is empty (or has only empty traces)")
    if excluded:
        log.info("excluding %d seeds with empty traces", len(excluded))

    n = len(corpora)
    per_edges = [instance_edges(seeds_per[i]) for i in active]
    overlap = intersect_all(per_edges)

    # seeds indexed by the nodes their edges enter, per instance
    by_dst = [defaultdict(list) for _ in range(n)]
    for i in active:
        for s in seeds_per[i]:
            for dst in {e.dst for e in s.edges}:
                by_dst[i][dst].append(s)

    rng = random.Random(rng_seed & RNG_SEED_MASK)
    assigned = [[] for _ in range(n)]
    picks = []
    cfg = build_cfg(overlap)
    depths = depth_map(cfg)
    while cfg.edges:
        leaf = deepest_leaf(cfg, depths)
        drawn = active[rng.randrange(len(active))]
        try:
            seed = pick_seed_for_leaf(cfg, leaf, by_dst[drawn][leaf])
            k = drawn
        except SeedNotFoundError:
            holders = []
            for i in active:
                try:
                    holders.append((i, pick_seed_for_leaf(cfg, leaf, by_dst[i][leaf])))
                except SeedNotFoundError:
                    pass
            if not holders:
                raise IntegrityError(
                    f"no instance has a seed covering shared edges into {leaf:016x}; "
                    "traces are inconsistent"
                ) from None
            log.warning("instance %d cannot cover %016x, redrawing", drawn, leaf)
            k, seed = holders[rng.randrange(len(holders))]
        removed = seed.edges & cfg.edges
        assigned[k].append(seed.name)
        picks.append(Pick(leaf, drawn, k, seed.name, seed.content_hash, frozenset(removed)))
        cfg = cfg.without(removed)

    partial = DistributionResult(
        assigned, picks, [[] for _ in range(n)], rng_seed, len(overlap), excluded
    )
    return preserve_tail(corpora, overlap, partial)


def verify_properties(result: DistributionResult, corpora) -> PropertyReport:
    """Check disjointness, completeness and report the workload balance proxy."""
    corpora = list(corpora)
    if len(corpora) != result.n or len(result.preserved) != result.n:
        raise InvalidInputError(
            f"result has {result.n} instances but {len(corpora)} corpora were given"
        )
    problems = []
    lookup = [c.by_name() for c in corpora]
    selected = []
    for i in range(result.n):
        recs = []
        for name in result.selected(i):
            rec = lookup[i].get(name)
            if rec is None:
                raise InvalidInputError(f"seed {name!r} is not in the corpus of instance {i}")
            recs.append(rec)
        selected.append(recs)

    # P1: removed-edge sets pairwise disjoint, and no content in two instances
    p1 = True
    seen_edges = set()
    for p in result.picks:
        if not seen_edges.isdisjoint(p.removed):
            p1 = False
            problems.append(f"edges removed twice at pick of {p.seed!r}")
        seen_edges |= p.removed
    owner = {}
    for i, recs in enumerate(selected):
        for r in recs:
            j = owner.setdefault(r.content_hash, i)
            if j != i:
                p1 = False
                problems.append(f"content {r.content_hash[:12]} assigned to {j} and {i}")

    # P2: exact bucketed-edge union equality
    want = set()
    for c in corpora:
        for s in c.seeds:
            want |= s.edges
    got = set()
    for recs in selected:
        for r in recs:
            got |= r.edges
    p2 = want == got
    if not p2:
        problems.append(f"{len(want - got)} edges lost, {len(got - want)} edges invented")

    draws = Counter(p.drawn for p in result.picks)
    p3 = {
        "assigned_counts": [len(a) for a in result.assigned],
        "selected_counts": [len(s) for s in selected],
        "draw_histogram": [draws.get(i, 0) for i in range(result.n)],
    }
    return PropertyReport(p1, p2, p3, problems)

import random
from itertools import combinations

import pytest

from fuzzdivide.corpus import InstanceCorpus
from fuzzdivide.distill import (
    ALGORITHMS,
    distill,
    distill_ours,
    distill_size_weighted,
    distill_time_weighted,
    distill_unweighted,
    optimal_cover_oracle,
)
from fuzzdivide.errors import CorpusTooLargeError, InvalidInputError

from conftest import make_record, seed_name


def corpus(*edge_lists, **kw):
    times = kw.get("times") or [10] * len(edge_lists)
    sizes = kw.get("sizes") or [None] * len(edge_lists)
    return InstanceCorpus(0, tuple(
        make_record(seed_name(i), 0, i, es, exec_time=t, size=sz)
        for i, (es, t, sz) in enumerate(zip(edge_lists, times, sizes))
    ))


def harmonic(n):
    return sum(1.0 / k for k in range(1, n + 1))


def random_small(rng, max_seeds=12, max_edges=30):
    universe = [(rng.randrange(8), rng.randrange(8), rng.randrange(2)) for _ in range(max_edges)]
    universe = sorted(set(universe))
    k = rng.randint(1, max_seeds)
    lists = [rng.sample(universe, rng.randint(1, min(8, len(universe)))) for _ in range(k)]
    return corpus(*lists, times=[rng.randint(1, 100) for _ in lists],
                  sizes=[rng.randint(1, 100) for _ in lists])


def test_single_seed_covering_all():
    c = corpus([(1, 2, 0), (2, 3, 0)], [(1, 2, 0)])
    for algo in ("ours", "unweighted"):
        assert distill(c, algo).picked == (seed_name(0),)


def test_disjoint_all_picked():
    c = corpus([(1, 2, 0)], [(3, 4, 0)], [(5, 6, 0)])
    for algo in ALGORITHMS:
        assert len(distill(c, algo).picked) == 3


def test_time_picks_faster():
    c = corpus([(1, 2, 0)], [(1, 2, 0)], times=[10, 5])
    assert distill_time_weighted(c).picked == (seed_name(1),)


def test_time_may_bypass_slow_superset():
    c = corpus([(1, 2, 0), (2, 3, 0)], [(1, 2, 0)], [(2, 3, 0)], times=[100, 1, 1])
    out = distill_time_weighted(c)
    assert out.picked == (seed_name(1), seed_name(2))
    assert out.covered == {e for s in c.seeds for e in s.edges}


def test_time_all_zero_rejected():
    c = corpus([(1, 2, 0)], times=[0])
    with pytest.raises(InvalidInputError):
        distill_time_weighted(c)


def test_size_picks_smaller_then_faster():
    c = corpus([(1, 2, 0)], [(1, 2, 0)], sizes=[100, 10])
    assert distill_size_weighted(c).picked == (seed_name(1),)
    c = corpus([(1, 2, 0)], [(1, 2, 0)], sizes=[10, 10], times=[9, 3])
    assert distill_size_weighted(c).picked == (seed_name(1),)


def test_ours_single_seed_and_dominating_youngest():
    c = corpus([(1, 2, 0)])
    assert distill_ours(c).picked == (seed_name(0),)
    c = corpus([(1, 2, 0)], [(2, 3, 0)], [(1, 2, 0), (2, 3, 0), (3, 4, 0)])
    assert distill_ours(c).picked == (seed_name(2),)


def test_empty_corpus():
    c = InstanceCorpus(0)
    for algo in ("ours", "unweighted", "size"):
        assert distill(c, algo).picked == ()
    assert optimal_cover_oracle(c).picked == ()


def test_unknown_algorithm():
    with pytest.raises(InvalidInputError):
        distill(corpus([(1, 2, 0)]), "magic")


def test_oracle_examples():
    c = corpus([(1, 2, 0), (2, 3, 0)], [(2, 3, 0), (3, 4, 0)], [(3, 4, 0), (4, 5, 0)])
    assert optimal_cover_oracle(c).picked == (seed_name(0), seed_name(2))
    c = corpus([(1, 2, 0)], [(3, 4, 0)])
    assert len(optimal_cover_oracle(c).picked) == 2


def test_oracle_refuses_large():
    c = corpus(*[[(i, i + 1, 0)] for i in range(21)])
    with pytest.raises(CorpusTooLargeError):
        optimal_cover_oracle(c)


def _brute_min(c):
    seeds = list(c.seeds)
    want = set().union(*(s.edges for s in seeds))
    for k in range(len(seeds) + 1):
        for combo in combinations(seeds, k):
            if set().union(*(s.edges for s in combo)) == want:
                return k
    raise AssertionError


def test_random_covering_and_bounds():
    rng = random.Random(21)
    for _ in range(150):
        c = random_small(rng, max_seeds=9)
        want = set().union(*(s.edges for s in c.seeds))
        opt = optimal_cover_oracle(c)
        assert len(opt.picked) == _brute_min(c)
        bound = harmonic(len(want)) * len(opt.picked)
        for algo in ALGORITHMS:
            out = distill(c, algo, rng_seed=rng.randrange(100))
            chosen = c.by_name()
            assert set().union(*(chosen[n].edges for n in out.picked)) == want
            assert out.covered == want
            assert len(out.picked) == len(set(out.picked))
            assert len(opt.picked) <= len(out.picked)
            if algo in ("ours", "unweighted"):
                assert len(out.picked) <= bound


def test_json_shape():
    out = distill(corpus([(1, 2, 0)]), "size")
    assert out.to_json() == {"algorithm": "size", "picked_count": 1,
                             "picked": [seed_name(0)], "edge_count": 1}

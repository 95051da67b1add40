import random

import pytest
from scipy import stats as sps

from fuzzdivide.errors import InvalidInputError
from fuzzdivide.stats import mann_whitney_u, rankdata


def test_ranks_with_ties():
    assert rankdata([10, 20, 10, 30]) == [1.5, 3.0, 1.5, 4.0]


def test_fully_separated():
    r = mann_whitney_u([1, 2], [3, 4])
    assert r.u_a == 0 and r.u_b == 4
    # only 2 of the 6 rank placements are as extreme: p = 2/6
    assert r.p_value == pytest.approx(1 / 3)


def test_identical_samples():
    assert mann_whitney_u([5, 6, 7], [5, 6, 7]).p_value >= 0.99
    assert mann_whitney_u([3] * 20, [3] * 20).p_value >= 0.99


def test_textbook_pair():
    # a = {19,22,16,29,24}, b = {20,11,17,12}: ranks of a are 5,7,3,9,8 -> R=32
    r = mann_whitney_u([19, 22, 16, 29, 24], [20, 11, 17, 12])
    assert r.u_a == 32 - 15
    assert r.u_a + r.u_b == 20


def test_five_vs_five_separated():
    r = mann_whitney_u([10, 11, 12, 13, 14], [1, 2, 3, 4, 5])
    assert r.p_value == pytest.approx(2 / 252)
    assert r.p_value < 0.05


def test_against_scipy():
    rng = random.Random(8)
    for _ in range(200):
        n1, n2 = rng.randint(1, 9), rng.randint(1, 9)
        a = [rng.randint(0, 6) for _ in range(n1)]
        b = [rng.randint(0, 6) for _ in range(n2)]
        mine = mann_whitney_u(a, b)
        ref = sps.mannwhitneyu(a, b, alternative="two-sided",
                               method="exact" if mine.method == "exact" else "asymptotic")
        assert mine.u_a == pytest.approx(ref.statistic)
        if mine.method == "exact" and len(set(a + b)) == n1 + n2:
            assert mine.p_value == pytest.approx(ref.pvalue)
        if mine.method == "asymptotic":
            assert mine.p_value == pytest.approx(ref.pvalue)


def _u_by_pairs(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b)


def test_exact_with_ties_against_label_enumeration():
    rng = random.Random(12)
    for _ in range(60):
        a = [rng.randint(0, 3) for _ in range(rng.randint(1, 6))]
        b = [rng.randint(0, 3) for _ in range(rng.randint(1, 6))]
        mine = mann_whitney_u(a, b)
        assert mine.method == "exact"
        assert mine.u_a == _u_by_pairs(a, b)
        pooled = a + b
        mu = len(a) * len(b) / 2
        observed = abs(mine.u_a - mu)
        hits = total = 0
        for mask in range(1 << len(pooled)):
            xs = [v for k, v in enumerate(pooled) if mask >> k & 1]
            if len(xs) != len(a):
                continue
            ys = [v for k, v in enumerate(pooled) if not mask >> k & 1]
            total += 1
            hits += abs(_u_by_pairs(xs, ys) - mu) >= observed - 1e-9
        assert mine.p_value == pytest.approx(hits / total)


def test_empty_rejected():
    with pytest.raises(InvalidInputError):
        mann_whitney_u([], [1])

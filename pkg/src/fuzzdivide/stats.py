"""Mann-Whitney U test, two-sided."""

from __future__ import annotations

import math
from collections import Counter
from itertools import combinations
from typing import NamedTuple, Sequence

from .errors import InvalidInputError

EXACT_LIMIT = 12


class MannWhitneyResult(NamedTuple):
    u_a: float
    u_b: float
    p_value: float
    method: str


def rankdata(values: Sequence[float]) -> list:
    """Fractional ranks starting at 1; tied values share their mean rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def mann_whitney_u(sample_a, sample_b) -> MannWhitneyResult:
    """U statistics and two-sided p-value.

    Small samples (combined size <= 12) get the exact permutation
    distribution, which stays valid with ties. Larger ones use the normal
    approximation with tie and continuity correction.
    """
    a = [float(x) for x in sample_a]
    b = [float(x) for x in sample_b]
    if not a or not b:
        raise InvalidInputError("both samples must be non-empty")
    n1, n2 = len(a), len(b)
    ranks = rankdata(a + b)
    r1 = sum(ranks[:n1])
    u_a = r1 - n1 * (n1 + 1) / 2.0
    u_b = n1 * n2 - u_a
    mu = n1 * n2 / 2.0

    if n1 + n2 <= EXACT_LIMIT:
        observed = abs(u_a - mu)
        offset = n1 * (n1 + 1) / 2.0
        hits = total = 0
        for combo in combinations(ranks, n1):
            total += 1
            if abs(sum(combo) - offset - mu) >= observed - 1e-9:
                hits += 1
        return MannWhitneyResult(u_a, u_b, min(1.0, hits / total), "exact")

    n = n1 + n2
    ties = sum(t ** 3 - t for t in Counter(a + b).values())
    var = n1 * n2 / 12.0 * ((n + 1) - ties / (n * (n - 1)))
    if var <= 0:
        return MannWhitneyResult(u_a, u_b, 1.0, "asymptotic")
    z = max(abs(u_a - mu) - 0.5, 0.0) / math.sqrt(var)
    p = math.erfc(z / math.sqrt(2.0))
    return MannWhitneyResult(u_a, u_b, min(1.0, p), "asymptotic")

"""Edge-coverage model: edge identity, hit-count buckets, trace files and
per-instance aggregation.

An edge is the triple ``(src, dst, bucket)``. The same control-flow transition
observed with hit counts in different buckets yields distinct edges, which is
what every set operation in this package works on.
"""

from __future__ import annotations

import bisect
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

from .errors import InvalidCountError, InvalidInputError, TraceFormatError

BLOCK_ID_MAX = (1 << 64) - 1

# Lower bound of each hit-count bucket; bucket i covers [LOWER[i], LOWER[i+1]).
BUCKET_LOWER_BOUNDS = (1, 2, 3, 4, 8, 16, 32, 128)
NUM_BUCKETS = len(BUCKET_LOWER_BOUNDS)

_TRACE_LINE = re.compile(rb"([0-9a-f]{16}) ([0-9a-f]{16}) ([0-9]+)")


def bucketize(count: int) -> int:
    """Map a raw hit count (>= 1) to its bucket index in ``[0, 7]``."""
    if isinstance(count, bool) or not isinstance(count, int):
        raise InvalidCountError(f"hit count must be an integer, got {count!r}")
    if count < 1:
        raise InvalidCountError(f"hit count must be >= 1, got {count}")
    return bisect.bisect_right(BUCKET_LOWER_BOUNDS, count) - 1


def bucket_range(bucket: int) -> tuple[int, Optional[int]]:
    """Inclusive ``(low, high)`` counts for a bucket; ``high`` is None for the last."""
    if not 0 <= bucket < NUM_BUCKETS:
        raise InvalidInputError(f"bucket index out of range: {bucket}")
    low = BUCKET_LOWER_BOUNDS[bucket]
    high = BUCKET_LOWER_BOUNDS[bucket + 1] - 1 if bucket + 1 < NUM_BUCKETS else None
    return low, high


class EdgeKey(NamedTuple):
    src: int
    dst: int
    bucket: int

    def __str__(self):
        return f"{self.src:016x}->{self.dst:016x}#{self.bucket}"


EdgeSet = frozenset  # frozenset[EdgeKey]


def _check_block(value, what):
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value <= BLOCK_ID_MAX:
        raise InvalidInputError(f"{what} is not a 64-bit block id: {value!r}")


@dataclass(frozen=True)
class SeedTrace:
    """Coverage of one seed execution.

    ``raw`` holds the per-transition hit counts when known; ``edges`` is always
    the bucketed view of it.
    """

    edges: frozenset
    raw: Optional[Mapping[tuple[int, int], int]] = None

    @classmethod
    def from_counts(cls, counts: Mapping[tuple[int, int], int]) -> "SeedTrace":
        raw = {}
        edges = set()
        for (src, dst), count in counts.items():
            _check_block(src, "src")
            _check_block(dst, "dst")
            edges.add(EdgeKey(src, dst, bucketize(count)))
            raw[(src, dst)] = count
        return cls(frozenset(edges), raw)

    @classmethod
    def from_edges(cls, edges: Iterable[EdgeKey]) -> "SeedTrace":
        return cls(frozenset(EdgeKey(*e) for e in edges))

    def __hash__(self):
        return hash(self.edges)

    def __len__(self):
        return len(self.edges)

    def __bool__(self):
        return bool(self.edges)

    def counts(self) -> dict[tuple[int, int], int]:
        """Raw counts, or the lower bound of each bucket when counts are unknown."""
        if self.raw is not None:
            return dict(self.raw)
        out = {}
        for e in self.edges:
            if (e.src, e.dst) in out:
                raise InvalidInputError(
                    f"trace has two buckets for {e.src:016x}->{e.dst:016x}; "
                    "a single execution cannot produce that"
                )
            out[(e.src, e.dst)] = BUCKET_LOWER_BOUNDS[e.bucket]
        return out


def parse_trace(data: bytes, path=None) -> SeedTrace:
    """Parse the ``<src> <dst> <count>`` trace format.

    Line order is not enforced on input; ``serialize_trace`` always sorts.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    counts: dict[tuple[int, int], int] = {}
    for lineno, line in enumerate(lines, start=1):
        m = _TRACE_LINE.fullmatch(line)
        if m is None:
            raise TraceFormatError(f"malformed trace line {line[:80]!r}", lineno, path)
        src = int(m.group(1), 16)
        dst = int(m.group(2), 16)
        count = int(m.group(3))
        if count < 1:
            raise TraceFormatError(f"hit count must be >= 1, got {count}", lineno, path)
        if (src, dst) in counts:
            raise TraceFormatError(
                f"duplicate edge {src:016x} {dst:016x}", lineno, path
            )
        counts[(src, dst)] = count
    return SeedTrace.from_counts(counts)


def serialize_trace(trace: SeedTrace) -> bytes:
    counts = trace.counts()
    out = [
        f"{src:016x} {dst:016x} {counts[(src, dst)]}\n"
        for src, dst in sorted(counts)
    ]
    return "".join(out).encode("utf-8")


@dataclass(frozen=True)
class AggregateCoverage:
    per_instance: tuple  # tuple[frozenset[EdgeKey], ...]
    overlap: frozenset
    complement: tuple

    @property
    def union(self) -> frozenset:
        return frozenset().union(*self.per_instance)


def instance_edges(seeds) -> frozenset:
    out = set()
    for s in seeds:
        out |= s.trace.edges
    return frozenset(out)


def intersect_all(edge_sets: Sequence[frozenset]) -> frozenset:
    if not edge_sets:
        return frozenset()
    # smallest first keeps the running intersection cheap
    ordered = sorted(edge_sets, key=len)
    acc = set(ordered[0])
    for s in ordered[1:]:
        acc &= s
        if not acc:
            break
    return frozenset(acc)


def aggregate_instances(corpora) -> AggregateCoverage:
    """Per-instance edge unions, their intersection and per-instance remainders."""
    corpora = list(corpora)
    if not corpora:
        raise InvalidInputError("aggregate_instances needs at least one corpus")
    per = tuple(instance_edges(c.seeds) for c in corpora)
    overlap = intersect_all(per)
    complement = tuple(frozenset(e - overlap) for e in per)
    return AggregateCoverage(per, overlap, complement)

"""When to redistribute, and one pull -> distribute -> push round over a sync dir."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .corpus import atomic_write, dedup_by_content, ingest_instance, write_allowlists
from .coverage import instance_edges
from .distributor import RNG_SEED_MASK, distribute
from .errors import IngestError, InvalidInputError

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.10
DEFAULT_WARMUP = 3600.0
DEFAULT_POLL = 30.0
SCHEMA_VERSION = "1"


@dataclass
class SchedulerState:
    baseline_edges: int = 0
    warmup: float = DEFAULT_WARMUP
    start: float = 0.0
    last_run: Optional[float] = None
    rounds: int = 0

    def record_round(self, edges: int, now: float) -> None:
        self.baseline_edges = edges
        self.last_run = now
        self.rounds += 1


def should_redistribute(state: SchedulerState, current_edges: int, now, threshold=DEFAULT_THRESHOLD) -> bool:
    """First round once warmup has elapsed; later rounds on strict edge growth above ``threshold``."""
    if state.rounds == 0:
        return now - state.start >= state.warmup
    growth = max(current_edges - state.baseline_edges, 0)
    if state.baseline_edges == 0:
        return current_edges > 0
    return growth / state.baseline_edges > threshold


@dataclass
class RoundSummary:
    instances: list
    seeds_in: int
    seeds_assigned: int
    seeds_preserved: int
    overlap_edges: int
    total_edges: int
    report_path: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "instances": self.instances,
            "seeds_in": self.seeds_in,
            "seeds_assigned": self.seeds_assigned,
            "seeds_preserved": self.seeds_preserved,
            "overlap_edges": self.overlap_edges,
            "total_edges": self.total_edges,
            "report_path": self.report_path,
        }


def instance_dirs(sync_dir) -> list:
    sync_dir = Path(sync_dir)
    if not sync_dir.is_dir():
        raise IngestError(f"{sync_dir}: sync directory does not exist")
    try:
        dirs = sorted(p for p in sync_dir.iterdir() if p.is_dir() and not p.name.startswith("."))
    except OSError as exc:
        raise IngestError(f"{sync_dir}: cannot list: {exc.strerror}") from exc
    if not dirs:
        raise IngestError(f"{sync_dir}: no instance directories")
    return dirs


def ingest_sync_dir(sync_dir) -> tuple[list, list]:
    dirs = instance_dirs(sync_dir)
    corpora = []
    for i, d in enumerate(dirs):
        try:
            corpora.append(ingest_instance(d, i))
        except OSError as exc:
            raise IngestError(f"{d}: {exc}") from exc
    return dirs, corpora


def count_edges(corpora) -> int:
    edges = set()
    for c in corpora:
        edges |= instance_edges(c.seeds)
    return len(edges)


def orchestrate_once(sync_dir, rng_seed: int, report_path=None) -> RoundSummary:
    """Ingest every instance, distribute, and rewrite all allow-lists together.

    Nothing is written until distribution has succeeded, and the allow-lists
    are staged before any of them is renamed into place.
    """
    dirs, corpora = ingest_sync_dir(sync_dir)
    seeds_in = sum(len(c) for c in corpora)
    deduped, dedup = dedup_by_content(corpora)
    if dedup.aliases:
        log.info("dedup suppressed %d cross-instance copies", len(dedup.aliases))
    result = distribute(deduped, rng_seed)

    targets = []
    for i, (d, c) in enumerate(zip(dirs, deduped)):
        names = set(result.selected(i))
        targets.append((d, [s for s in c.seeds if s.name in names]))

    write_allowlists(targets)

    report = None
    if report_path is not None:
        report = Path(report_path)
        payload = {
            "schema_version": SCHEMA_VERSION,
            "instances": [d.name for d in dirs],
            "aliases": [list(a) for a in dedup.aliases],
            **result.to_json(),
        }
        atomic_write(report, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())
    return RoundSummary(
        instances=[d.name for d in dirs],
        seeds_in=seeds_in,
        seeds_assigned=sum(len(a) for a in result.assigned),
        seeds_preserved=sum(len(p) for p in result.preserved),
        overlap_edges=result.overlap_size,
        total_edges=count_edges(deduped),
        report_path=str(report) if report else None,
    )


def round_seed(rng_seed: int, round_no: int) -> int:
    return (rng_seed + round_no) & RNG_SEED_MASK


def watch(
    sync_dir,
    rng_seed: int,
    threshold: float = DEFAULT_THRESHOLD,
    warmup: float = DEFAULT_WARMUP,
    poll: float = DEFAULT_POLL,
    report_path=None,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
    max_polls: Optional[int] = None,
    on_round: Optional[Callable[[RoundSummary], None]] = None,
) -> SchedulerState:
    """Poll the sync dir and redistribute whenever ``should_redistribute`` fires.

    Runs until interrupted, or for ``max_polls`` polls when given.
    """
    if poll < 0 or warmup < 0 or threshold < 0:
        raise InvalidInputError("poll, warmup and threshold must be non-negative")
    state = SchedulerState(warmup=warmup, start=clock())
    polls = 0
    while max_polls is None or polls < max_polls:
        polls += 1
        now = clock()
        _, corpora = ingest_sync_dir(sync_dir)
        edges = count_edges(corpora)
        if should_redistribute(state, edges, now, threshold):
            summary = orchestrate_once(sync_dir, round_seed(rng_seed, state.rounds), report_path)
            state.record_round(summary.total_edges, now)
            log.info("round %d: %d edges, %d seeds kept", state.rounds, edges,
                     summary.seeds_assigned + summary.seeds_preserved)
            if on_round is not None:
                on_round(summary)
        if max_polls is None or polls < max_polls:
            sleep(poll)
    return state

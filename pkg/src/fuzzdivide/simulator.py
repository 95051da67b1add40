"""Deterministic parallel-fuzzing campaign simulator.

A synthetic program is a layered random DAG where some blocks loop on
themselves a geometric number of times. A seed is one entry-to-sink walk; its
trace is the bucketed edge set of that walk. Mutating a seed reroutes its walk
at a random position and keeps the child only if it reaches an edge nobody in
the campaign has covered yet.

Each epoch every instance works through a fixed number of queue slots, cycling
through its queue like AFL does, and skipping seeds its allow-list excludes.
Every visit draws ``energy`` random havoc candidates. The first time an
instance mutates a seed it also runs ``det_energy`` deterministic candidates
that depend only on the seed content, the way AFL's bit-flip and arithmetic
stages do, so two instances repeating that stage learn nothing new.
Instances then exchange new seeds. Policies differ only in how queues are
restricted when the scheduler decides to redistribute:

* ``shared``: never restricted (plain AFL parallel mode).
* ``pfuzz``: every distinct seed, dealt round-robin by birth. This is an
  approximation of P-FUZZ.
* ``pafl``: only seeds reaching a rarely-hit edge, dealt round-robin. This is
  an approximation of PAFL.
* ``edge``: content dedup followed by ``distributor.distribute``.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import random
import statistics
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from .corpus import InstanceCorpus, SeedRecord, dedup_by_content
from .coverage import SeedTrace
from .distributor import distribute
from .errors import InvalidInputError
from .scheduler import DEFAULT_THRESHOLD, SchedulerState, should_redistribute
from .stats import mann_whitney_u

log = logging.getLogger(__name__)

POLICIES = ("shared", "pfuzz", "pafl", "edge")
APPROXIMATE_POLICIES = ("pfuzz", "pafl")


def derive_seed(*parts) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class ProgramParams:
    blocks: int = 200
    branch_factor: int = 3
    layer_width: int = 5
    self_loop_prob: float = 0.3
    loop_continue: float = 0.7  # chance of one more loop iteration
    guard_prob: float = 0.3  # share of branches that are hard to take
    guard_weight: float = 0.03  # relative odds of taking a guarded branch

    def validate(self):
        if self.blocks < 1:
            raise InvalidInputError("blocks must be >= 1")
        if self.branch_factor < 1 or self.layer_width < 1:
            raise InvalidInputError("branch_factor and layer_width must be >= 1")
        if not 0.0 <= self.self_loop_prob <= 1.0:
            raise InvalidInputError("self_loop_prob must lie in [0, 1]")
        if not 0.0 <= self.loop_continue < 1.0:
            raise InvalidInputError("loop_continue must lie in [0, 1)")
        if not 0.0 <= self.guard_prob <= 1.0 or not 0.0 < self.guard_weight <= 1.0:
            raise InvalidInputError("guard_prob must lie in [0, 1] and guard_weight in (0, 1]")


@dataclass(frozen=True)
class SyntheticProgram:
    blocks: int
    edges: frozenset  # (src, dst) pairs, self-loops excluded
    self_loops: frozenset
    entry: int
    succ: dict = field(compare=False, repr=False, default_factory=dict)
    loop_continue: float = 0.7
    weights: dict = field(compare=False, repr=False, default_factory=dict)  # (src, dst) -> odds

    def branch_weights(self, block, choices) -> list:
        return [self.weights.get((block, c), 1.0) for c in choices]

    def successors(self, block) -> tuple:
        return self.succ.get(block, ())

    def sinks(self) -> list:
        return [b for b in range(self.blocks) if not self.succ.get(b)]


def gen_program(params: ProgramParams = ProgramParams(), rng_seed: int = 0) -> SyntheticProgram:
    """Layered random DAG: block 0 alone in the first layer, then rows of
    ``layer_width``. Every block gets a parent in the previous layer, and every
    non-sink block aims for 1..branch_factor successors in the next two layers.
    Non-sink blocks gain a self-loop with probability ``self_loop_prob``.
    At blocks with several successors, each branch is guarded with probability
    ``guard_prob``; a walk takes a guarded branch with odds ``guard_weight``
    against 1 for a plain one.
    """
    params.validate()
    rng = random.Random(rng_seed)
    layers = [[0]]
    rest = list(range(1, params.blocks))
    for i in range(0, len(rest), params.layer_width):
        layers.append(rest[i:i + params.layer_width])
    succ = {b: set() for b in range(params.blocks)}
    for li in range(len(layers) - 1):
        cur, nxt = layers[li], layers[li + 1]
        for b in nxt:
            succ[rng.choice(cur)].add(b)
        reach = nxt + (layers[li + 2] if li + 2 < len(layers) else [])
        for b in cur:
            want = rng.randint(1, params.branch_factor)
            options = [c for c in reach if c not in succ[b]]
            rng.shuffle(options)
            while len(succ[b]) < want and options:
                succ[b].add(options.pop())
    loops = set()
    for b in range(params.blocks):
        if succ[b] and rng.random() < params.self_loop_prob:
            loops.add(b)
    frozen_succ = {u: tuple(sorted(vs)) for u, vs in succ.items() if vs}
    weights = {}
    for u, vs in frozen_succ.items():
        if len(vs) < 2:
            continue
        for v in vs:
            if rng.random() < params.guard_prob:
                weights[(u, v)] = params.guard_weight
    edges = frozenset((u, v) for u, vs in frozen_succ.items() for v in vs)
    return SyntheticProgram(
        params.blocks, edges, frozenset(loops), 0, frozen_succ,
        params.loop_continue, weights,
    )


# A walk is a tuple of (block, loop_iterations) pairs from entry to a sink.

def _loops_at(program, block, rng) -> int:
    if block not in program.self_loops:
        return 0
    n = 0
    while rng.random() < program.loop_continue:
        n += 1
    return n


def _continue_walk(program, prefix, block, rng, follow=None):
    """Extend ``prefix`` from ``block`` to a sink.

    ``follow`` maps blocks to positions in a parent walk; once the new path
    reaches one of them the parent's remaining suffix is reused verbatim.
    """
    walk = list(prefix)
    while True:
        if follow is not None and block in follow:
            return tuple(walk) + follow_suffix(follow, block)
        walk.append((block, _loops_at(program, block, rng)))
        nxt = program.successors(block)
        if not nxt:
            return tuple(walk)
        block = rng.choices(nxt, program.branch_weights(block, nxt))[0]


def follow_suffix(follow, block):
    parent, index = follow.walk, follow[block]
    return parent[index:]


class _Follow(dict):
    def __init__(self, walk):
        super().__init__((b, i) for i, (b, _) in enumerate(walk))
        self.walk = walk


def mutate_walk(program, walk, rng) -> tuple:
    """One local mutation: resample a loop count, or flip one branch and
    rejoin the parent's path as soon as the new route meets it again.
    """
    pos = rng.randrange(len(walk))
    block, loops = walk[pos]
    if block in program.self_loops and rng.random() < 0.5:
        return walk[:pos] + ((block, _loops_at(program, block, rng)),) + walk[pos + 1:]
    nxt = program.successors(block)
    taken = walk[pos + 1][0] if pos + 1 < len(walk) else None
    others = [b for b in nxt if b != taken]
    if not others:
        return walk
    target = rng.choices(others, program.branch_weights(block, others))[0]
    return _continue_walk(program, walk[:pos + 1], target, rng, _Follow(walk))


def random_walk(program, rng) -> tuple:
    return _continue_walk(program, (), program.entry, rng)


def walk_trace(walk) -> SeedTrace:
    counts = {}
    for (u, loops), (v, _) in zip(walk, walk[1:]):
        counts[(u, v)] = counts.get((u, v), 0) + 1
    for b, loops in walk:
        if loops:
            counts[(b, b)] = counts.get((b, b), 0) + loops
    return SeedTrace.from_counts(counts)


def walk_payload(walk) -> bytes:
    return ",".join(f"{b}x{n}" for b, n in walk).encode()


@dataclass(frozen=True)
class SimSeed:
    record: SeedRecord
    walk: tuple

    @property
    def content_hash(self):
        return self.record.content_hash


def make_seed(walk, instance, birth, name) -> SimSeed:
    payload = walk_payload(walk)
    rec = SeedRecord(
        name=name,
        instance=instance,
        birth=birth,
        size_bytes=len(payload),
        exec_time=len(walk) + sum(n for _, n in walk),
        content_hash=hashlib.sha256(payload).hexdigest(),
        trace=walk_trace(walk),
    )
    return SimSeed(rec, walk)


def gen_corpus(program: SyntheticProgram, k: int, rng_seed: int = 0, instance: int = 0) -> list:
    """``k`` random walks with births ``0..k-1``."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    rng = random.Random(rng_seed)
    return [
        make_seed(random_walk(program, rng), instance, i, f"id:{i:06d},orig")
        for i in range(k)
    ]


def mutate_round(program, parent: SimSeed, energy: int, rng: random.Random,
                 coverage: set, births, instance: Optional[int] = None) -> list:
    """Derive ``energy`` candidates from ``parent``; keep the globally novel ones.

    ``coverage`` is the campaign-wide edge set and is updated in place;
    ``births`` is an iterator handing out campaign-wide birth numbers.
    """
    if energy < 0:
        raise InvalidInputError("energy must be >= 0")
    if instance is None:
        instance = parent.record.instance
    kept = []
    for _ in range(energy):
        child_walk = mutate_walk(program, parent.walk, rng)
        trace = walk_trace(child_walk)
        if trace.edges <= coverage:
            continue
        coverage |= trace.edges
        birth = next(births)
        name = f"id:{birth:06d},src:{parent.record.birth:06d}"
        kept.append(make_seed(child_walk, instance, birth, name))
    return kept


@dataclass(frozen=True)
class SimConfig:
    instances: int = 2
    epochs: int = 30
    energy: int = 16  # havoc candidates per visit
    det_energy: int = 16  # deterministic candidates on an instance's first visit
    slots: int = 3  # queue entries each instance mutates per epoch
    initial_seeds: int = 10
    policy: str = "edge"
    program: ProgramParams = ProgramParams()
    rng_seed: int = 0
    repeats: int = 5
    threshold: float = DEFAULT_THRESHOLD
    warmup_epochs: int = 1

    def validate(self):
        if self.instances < 1:
            raise InvalidInputError("instances must be >= 1")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if self.energy < 0 or self.det_energy < 0 or self.slots < 0:
            raise InvalidInputError("energy, det_energy and slots must be >= 0")
        if self.initial_seeds < 1:
            raise InvalidInputError("initial_seeds must be >= 1")
        if self.repeats < 1:
            raise InvalidInputError("repeats must be >= 1")
        if self.policy not in POLICIES:
            raise InvalidInputError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        self.program.validate()

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class CampaignMetrics:
    policy: str
    repeat: int
    total_seeds: list = field(default_factory=list)
    mutation_rate: list = field(default_factory=list)
    overlap_rate: list = field(default_factory=list)
    global_edges: list = field(default_factory=list)
    instance_edges: list = field(default_factory=list)  # per epoch, list per instance
    distribution_epochs: list = field(default_factory=list)
    kept_children: int = 0

    @property
    def final_edges(self) -> int:
        return self.global_edges[-1]

    @property
    def final_overlap_rate(self) -> float:
        return self.overlap_rate[-1]

    def to_json(self) -> dict:
        return asdict(self)


class _Instance:
    def __init__(self, index):
        self.index = index
        self.queue = []  # content hashes in arrival order
        self.records = {}  # content hash -> SeedRecord as held by this instance
        self.blocked = set()
        self.pointer = 0

    def add(self, rec: SeedRecord):
        if rec.content_hash in self.records:
            return False
        self.records[rec.content_hash] = rec
        self.queue.append(rec.content_hash)
        return True

    def next_seed(self):
        n = len(self.queue)
        for step in range(n):
            i = (self.pointer + step) % n
            h = self.queue[i]
            if h not in self.blocked:
                self.pointer = i + 1
                return h
        return None

    def edges(self):
        out = set()
        for rec in self.records.values():
            out |= rec.edges
        return out

    def corpus(self) -> InstanceCorpus:
        return InstanceCorpus(self.index, tuple(self.records.values()))


class Campaign:
    """One simulated run. ``run_campaign`` is the usual entry point."""

    def __init__(self, config: SimConfig, repeat: int = 0):
        config.validate()
        self.config = config
        self.repeat = repeat
        self.program = gen_program(config.program, derive_seed(config.rng_seed, "program"))
        initial = gen_corpus(self.program, config.initial_seeds, derive_seed(config.rng_seed, "corpus"))
        self.rng = random.Random(derive_seed(config.rng_seed, "run", repeat))
        self.births = itertools.count(len(initial))
        self.walks = {}
        self.mutated_by = {}  # content hash -> instances that mutated it
        self.coverage = set()
        self.instances = [_Instance(i) for i in range(config.instances)]
        for s in initial:
            self._register(s)
            for inst in self.instances:
                inst.add(replace(s.record, instance=inst.index))
        self.scheduler = SchedulerState(warmup=config.warmup_epochs, start=0)
        self.metrics = CampaignMetrics(config.policy, repeat)

    def _register(self, seed: SimSeed):
        self.walks.setdefault(seed.content_hash, seed.walk)
        self.coverage |= seed.record.edges

    def _seed(self, inst, h) -> SimSeed:
        return SimSeed(inst.records[h], self.walks[h])

    def _record(self):
        m = self.metrics
        total = len(self.walks)
        mutated = sum(1 for v in self.mutated_by.values() if v)
        overlapped = sum(1 for v in self.mutated_by.values() if len(v) > 1)
        m.total_seeds.append(total)
        m.mutation_rate.append(mutated / total if total else 0.0)
        m.overlap_rate.append(overlapped / total if total else 0.0)
        m.global_edges.append(len(self.coverage))
        m.instance_edges.append([len(inst.edges()) for inst in self.instances])

    def _epoch(self):
        cfg = self.config
        fresh = [[] for _ in self.instances]
        for inst in self.instances:
            for _ in range(cfg.slots):
                h = inst.next_seed()
                if h is None:
                    break
                seen = self.mutated_by.setdefault(h, set())
                seed = self._seed(inst, h)
                children = []
                if inst.index not in seen and cfg.det_energy:
                    children += mutate_round(
                        self.program, seed, cfg.det_energy, random.Random(derive_seed("det", h)),
                        self.coverage, self.births, inst.index,
                    )
                seen.add(inst.index)
                children += mutate_round(
                    self.program, seed, cfg.energy, self.rng,
                    self.coverage, self.births, inst.index,
                )
                for child in children:
                    self._register(child)
                    inst.add(child.record)
                    fresh[inst.index].append(child)
                self.metrics.kept_children += len(children)
        # seed exchange: importers file copies under their own ids
        for inst in self.instances:
            for other in self.instances:
                if other is inst:
                    continue
                for child in fresh[other.index]:
                    if child.content_hash in inst.records:
                        continue
                    birth = next(self.births)
                    inst.add(replace(
                        child.record, instance=inst.index, birth=birth,
                        name=f"id:{birth:06d},sync:{other.index},src:{child.record.birth:06d}",
                    ))

    def _redistribute(self):
        policy = self.config.policy
        corpora = [inst.corpus() for inst in self.instances]
        deduped, _ = dedup_by_content(corpora)
        n = len(self.instances)
        if policy == "edge":
            result = distribute(deduped, self.rng.getrandbits(64))
            allowed = []
            for i, c in enumerate(deduped):
                names = set(result.selected(i))
                allowed.append({s.content_hash for s in c.seeds if s.name in names})
        else:
            pool = sorted((s for c in deduped for s in c.seeds), key=lambda s: (s.birth, s.instance))
            if policy == "pafl":
                pool = _rare_edge_seeds(pool)
            allowed = [set() for _ in range(n)]
            for j, s in enumerate(pool):
                target = self.instances[j % n]
                if s.content_hash not in target.records:
                    birth = next(self.births)
                    target.add(replace(s, instance=target.index, birth=birth,
                                       name=f"id:{birth:06d},dist:{s.instance}"))
                allowed[j % n].add(s.content_hash)
        for inst, allow in zip(self.instances, allowed):
            inst.blocked = set(inst.queue) - allow

    def run(self) -> CampaignMetrics:
        self._record()
        for epoch in range(self.config.epochs):
            self._epoch()
            now = epoch + 1
            if self.config.policy != "shared" and should_redistribute(
                self.scheduler, len(self.coverage), now, self.config.threshold
            ):
                self._redistribute()
                self.scheduler.record_round(len(self.coverage), now)
                self.metrics.distribution_epochs.append(now)
            self._record()
        return self.metrics


def _rare_edge_seeds(pool):
    hits = {}
    for s in pool:
        for e in s.edges:
            hits[e] = hits.get(e, 0) + 1
    if not hits:
        return pool
    median = statistics.median(hits.values())
    rare = {e for e, c in hits.items() if c < median}
    kept = [s for s in pool if not s.edges.isdisjoint(rare)]
    # every edge equally common: nothing is rare, keep the queue usable
    return kept or pool


def run_campaign(config: SimConfig, repeat: int = 0) -> CampaignMetrics:
    return Campaign(config, repeat).run()


@dataclass
class Comparison:
    policy: str
    baseline: str
    runs: list
    baseline_runs: list
    overlap_reduction_pct: float
    coverage_gain_pct: float
    p_value: float

    def to_json(self) -> dict:
        return {
            "overlap_reduction_pct": self.overlap_reduction_pct,
            "coverage_gain_pct": self.coverage_gain_pct,
            "p_value": self.p_value,
            "policy_final_overlap": [m.final_overlap_rate for m in self.runs],
            "baseline_final_overlap": [m.final_overlap_rate for m in self.baseline_runs],
            "policy_final_edges": [m.final_edges for m in self.runs],
            "baseline_final_edges": [m.final_edges for m in self.baseline_runs],
            "approximation": self.policy in APPROXIMATE_POLICIES,
        }


def compare_policies(config: SimConfig, baseline: str = "shared") -> Comparison:
    """Run ``config.repeats`` paired campaigns for the policy and the baseline."""
    config.validate()
    runs = [run_campaign(config, r) for r in range(config.repeats)]
    if config.policy == baseline:
        base = runs
    else:
        base_cfg = replace(config, policy=baseline)
        base = [run_campaign(base_cfg, r) for r in range(config.repeats)]
    pol_overlap = statistics.fmean(m.final_overlap_rate for m in runs)
    base_overlap = statistics.fmean(m.final_overlap_rate for m in base)
    pol_cov = statistics.fmean(m.final_edges for m in runs)
    base_cov = statistics.fmean(m.final_edges for m in base)
    reduction = 100.0 * (base_overlap - pol_overlap) / base_overlap if base_overlap else 0.0
    gain = 100.0 * (pol_cov - base_cov) / base_cov if base_cov else 0.0
    p = mann_whitney_u([m.final_edges for m in runs], [m.final_edges for m in base]).p_value
    return Comparison(config.policy, baseline, runs, base, reduction, gain, p)

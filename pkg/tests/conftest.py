import hashlib
import random

import pytest

from fuzzdivide.corpus import InstanceCorpus, SeedRecord
from fuzzdivide.coverage import EdgeKey, SeedTrace


def make_record(name, instance, birth, edges, size=None, exec_time=None, payload=None):
    edges = frozenset(EdgeKey(*e) for e in edges)
    payload = payload if payload is not None else f"{instance}/{name}".encode()
    return SeedRecord(
        name=name,
        instance=instance,
        birth=birth,
        size_bytes=len(payload) if size is None else size,
        exec_time=10 if exec_time is None else exec_time,
        content_hash=hashlib.sha256(payload).hexdigest(),
        trace=SeedTrace.from_edges(edges),
    )


def seed_name(birth, tag="orig"):
    return f"id:{birth:06d},{tag}"


def random_corpora(rng: random.Random, n, max_seeds=200, max_edges=500, share_prob=0.3, min_seeds=0):
    """Random corpora over a pool of at most ``max_edges`` EdgeKeys.

    Edges come from a random directed graph with cycles, self-loops and
    parallel bucket edges. Some seeds are copied byte-for-byte between
    instances so dedup and the content-hash rule are exercised.
    """
    blocks = rng.randint(2, 60)
    pool = set()
    target = rng.randint(1, max_edges)
    for _ in range(target * 3):
        if len(pool) >= target:
            break
        a, b = rng.randrange(blocks), rng.randrange(blocks)
        pool.add(EdgeKey(a, b, rng.randrange(8)))
    pool = sorted(pool)
    common = rng.sample(pool, rng.randint(0, min(len(pool), 40)))
    shared_payloads = []
    corpora = []
    birth_base = 0
    for i in range(n):
        k = rng.randint(min_seeds, max_seeds)
        seeds = []
        for j in range(k):
            birth = birth_base + j
            if shared_payloads and rng.random() < share_prob:
                payload, edges = rng.choice(shared_payloads)
            else:
                m = rng.randint(0, min(12, len(pool)))
                edges = set(rng.sample(pool, m))
                if common and rng.random() < 0.7:
                    edges |= set(rng.sample(common, rng.randint(1, len(common))))
                edges = _one_bucket_per_pair(edges)
                payload = f"{i}:{j}:{rng.random()}".encode()
                if rng.random() < 0.3:
                    shared_payloads.append((payload, edges))
            seeds.append(make_record(seed_name(birth), i, birth, edges, payload=payload,
                                     exec_time=rng.randint(1, 1000)))
        birth_base += k
        corpora.append(InstanceCorpus(i, tuple(seeds)))
    return corpora


def _one_bucket_per_pair(edges):
    # a single execution yields one hit count, hence one bucket, per pair
    by_pair = {}
    for e in sorted(edges):
        by_pair.setdefault((e.src, e.dst), e)
    return set(by_pair.values())


def path_edges(*blocks):
    return [(a, b, 0) for a, b in zip(blocks, blocks[1:])]


# Nine blocks, two instances. Seeds 1-4 exist in both instances (different
# bytes, same coverage); instance 0 also has Seed-5, which loops at block 5.
NINE_BLOCK = {
    "seed1": (0, path_edges(1, 3, 4, 6, 9)),
    "seed2": (1, path_edges(1, 2, 4, 8)),
    "seed3": (2, path_edges(1, 2, 4, 5, 7, 9)),
    "seed4": (3, path_edges(1, 3, 4, 8)),
}
SEED5 = (4, path_edges(1, 2, 4, 5) + [(5, 5, 2)])


def nine_block_corpora():
    corpora = []
    for i in range(2):
        seeds = [make_record(seed_name(b, tag), i, b, edges) for tag, (b, edges) in NINE_BLOCK.items()]
        if i == 0:
            seeds.append(make_record(seed_name(SEED5[0], "seed5"), 0, SEED5[0], SEED5[1]))
        corpora.append(InstanceCorpus(i, tuple(seeds)))
    return corpora


@pytest.fixture
def rng():
    return random.Random(1234)

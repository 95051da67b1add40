"""Control-flow graph over a set of bucketed edges.

Real CFGs contain loops, so node depth is defined on the SCC condensation:
entry components have depth 0 and every other component sits one below its
deepest predecessor component.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .coverage import EdgeKey
from .errors import InvalidInputError


@dataclass(frozen=True)
class Cfg:
    nodes: frozenset
    edges: frozenset
    entries: frozenset
    succ: dict = field(default_factory=dict, compare=False, repr=False)
    pred: dict = field(default_factory=dict, compare=False, repr=False)

    def __hash__(self):
        return hash(self.edges)

    def out_edges(self, node) -> frozenset:
        return self.succ.get(node, frozenset())

    def in_edges(self, node) -> frozenset:
        return self.pred.get(node, frozenset())

    def leaves(self) -> list:
        return sorted(n for n in self.nodes if not self.succ.get(n))

    def without(self, removed: Iterable[EdgeKey]) -> "Cfg":
        """Copy with ``removed`` edges dropped; nodes left without edges vanish."""
        return build_cfg(self.edges.difference(removed))

    def to_dot(self, name="cfg") -> str:
        lines = [f"digraph {name} {{"]
        for n in sorted(self.nodes):
            shape = ' [shape=box]' if n in self.entries else ""
            lines.append(f'  "{n:016x}"{shape};')
        for e in sorted(self.edges):
            lines.append(f'  "{e.src:016x}" -> "{e.dst:016x}" [label="{e.bucket}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_cfg(edges: Iterable[EdgeKey]) -> Cfg:
    edges = frozenset(EdgeKey(*e) for e in edges)
    succ = defaultdict(set)
    pred = defaultdict(set)
    nodes = set()
    for e in edges:
        nodes.add(e.src)
        nodes.add(e.dst)
        succ[e.src].add(e)
        pred[e.dst].add(e)
    entries = frozenset(n for n in nodes if not pred.get(n))
    return Cfg(
        frozenset(nodes),
        edges,
        entries,
        {k: frozenset(v) for k, v in succ.items()},
        {k: frozenset(v) for k, v in pred.items()},
    )


@dataclass(frozen=True)
class DepthMap:
    depth: dict  # node -> int
    scc: dict  # node -> component index (reverse topological order of discovery)

    def __getitem__(self, node):
        return self.depth[node]


def strongly_connected_components(nodes, successors) -> list:
    """Tarjan's algorithm, iterative. Components come out sinks first.

    ``successors`` maps a node to an iterable of neighbour nodes.
    """
    index = {}
    low = {}
    on_stack = set()
    stack = []
    comps = []
    counter = 0
    for root in sorted(nodes):
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        work = [(root, iter(sorted(successors(root))))]
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(successors(w)))))
                    advanced = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
    return comps


def depth_map(cfg: Cfg) -> DepthMap:
    def successors(n):
        return {e.dst for e in cfg.out_edges(n)}

    comps = strongly_connected_components(cfg.nodes, successors)
    scc = {}
    for i, comp in enumerate(comps):
        for n in comp:
            scc[n] = i
    # Tarjan emits sinks first, so reversed order is a topological order of
    # the condensation.
    comp_depth = [0] * len(comps)
    for i in reversed(range(len(comps))):
        for n in comps[i]:
            for e in cfg.out_edges(n):
                j = scc[e.dst]
                if j != i and comp_depth[j] < comp_depth[i] + 1:
                    comp_depth[j] = comp_depth[i] + 1
    depth = {n: comp_depth[scc[n]] for n in cfg.nodes}
    return DepthMap(depth, scc)


def deepest_leaf(cfg: Cfg, depths: DepthMap) -> int:
    """Deepest node without outgoing edges, smallest id on ties.

    If every node has a successor (all sinks are cycles), fall back to the
    deepest node that still has an incoming edge, again smallest id first.
    Depths may come from a larger, earlier graph, so a node that was inside a
    cycle can lose all its incoming edges yet keep the top depth.
    """
    if not cfg.edges:
        raise InvalidInputError("deepest_leaf needs a graph with at least one edge")
    leaves = cfg.leaves()
    candidates = leaves if leaves else [n for n in cfg.nodes if cfg.in_edges(n)]
    return min(candidates, key=lambda n: (-depths.depth[n], n))

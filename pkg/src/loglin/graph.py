"""Independence graphs of hierarchical models.

Chordality is decided by maximum cardinality search followed by a check
that the reversed visit order is a perfect elimination ordering.  Cliques
of chordal graphs come from the same search; general graphs fall back to
Bron-Kerbosch, which is plenty for desk-scale factor counts.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import GeneratingClass


class NotDecomposableError(ValueError):
    """Raised when a chordal graph is required but not supplied."""


def _edge(u: str, v: str) -> frozenset[str]:
    if u == v:
        raise ValueError(f"self-loop on {u!r}")
    return frozenset((u, v))


@dataclass(frozen=True)
class Graph:
    vertices: tuple[str, ...]
    edges: frozenset[frozenset[str]]

    def __post_init__(self):
        edges = frozenset(_edge(*tuple(e)) for e in self.edges)
        if edges and not set().union(*edges) <= set(self.vertices):
            raise ValueError("edge endpoint is not a vertex")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "vertices", tuple(self.vertices))

    @classmethod
    def from_pairs(cls, vertices: Sequence[str], pairs: Iterable) -> Graph:
        return cls(tuple(vertices), frozenset(_edge(u, v) for u, v in pairs))

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        for e in self.edges:
            u, v = tuple(e)
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def has_edge(self, u: str, v: str) -> bool:
        return frozenset((u, v)) in self.edges

    def toggle(self, u: str, v: str) -> Graph:
        return Graph(self.vertices, self.edges ^ {_edge(u, v)})

    def vertex_pairs(self) -> list[tuple[str, str]]:
        return list(itertools.combinations(self.vertices, 2))

    def subgraph(self, keep: Iterable[str]) -> Graph:
        keep = set(keep)
        return Graph(tuple(v for v in self.vertices if v in keep),
                     frozenset(e for e in self.edges if e <= keep))

    def components(self) -> list[frozenset[str]]:
        adj = self.adjacency()
        seen: set[str] = set()
        out = []
        for v in self.vertices:
            if v in seen:
                continue
            stack, comp = [v], set()
            while stack:
                x = stack.pop()
                if x in comp:
                    continue
                comp.add(x)
                stack.extend(adj[x] - comp)
            seen |= comp
            out.append(frozenset(comp))
        return out

    def edge_strings(self) -> list[str]:
        order = {v: k for k, v in enumerate(self.vertices)}
        return sorted("".join(sorted(e, key=order.get)) for e in self.edges)


def interaction_graph(gc: GeneratingClass) -> Graph:
    edges = set()
    for g in gc.generators:
        edges.update(frozenset(p) for p in itertools.combinations(sorted(g), 2))
    return Graph(gc.variables, frozenset(edges))


def max_cardinality_search(g: Graph) -> list[str]:
    """Visit order of MCS; ties go to the earliest vertex in `g.vertices`."""
    adj = g.adjacency()
    weight = {v: 0 for v in g.vertices}
    order: list[str] = []
    remaining = list(g.vertices)
    while remaining:
        v = max(remaining, key=lambda x: weight[x])  # max keeps the first on ties
        remaining.remove(v)
        order.append(v)
        for u in adj[v]:
            if u in weight and u not in order:
                weight[u] += 1
    return order


def _earlier_neighbours(g: Graph, order: Sequence[str]) -> dict[str, set[str]]:
    adj = g.adjacency()
    rank = {v: k for k, v in enumerate(order)}
    return {v: {u for u in adj[v] if rank[u] < rank[v]} for v in order}


def _peo_violation(g: Graph, order: Sequence[str]):
    """First (v, u, w) with u, w earlier neighbours of v but u !~ w, else None."""
    rank = {v: k for k, v in enumerate(order)}
    earlier = _earlier_neighbours(g, order)
    for v in order:
        if not earlier[v]:
            continue
        u = max(earlier[v], key=rank.get)
        for w in earlier[v] - {u}:
            if w not in earlier[u]:
                return v, u, w
    return None


def is_decomposable(g: Graph) -> bool:
    return _peo_violation(g, max_cardinality_search(g)) is None


def find_chordless_cycle(g: Graph) -> list[str] | None:
    """A chordless cycle of length >= 4, or None when `g` is chordal."""
    if is_decomposable(g):
        return None
    adj = g.adjacency()
    rank = {v: k for k, v in enumerate(g.vertices)}

    def extend(path):
        last = path[-1]
        for x in sorted(adj[last], key=rank.get):
            if x in path or rank[x] < rank[path[0]]:
                continue
            if any(x in adj[p] for p in path[1:-1]):
                continue
            if len(path) > 1 and x in adj[path[0]]:
                if len(path) >= 3:
                    return path + [x]
                continue
            found = extend(path + [x])
            if found:
                return found
        return None

    for s in g.vertices:
        cyc = extend([s])
        if cyc:
            return cyc
    raise AssertionError("non-chordal graph without a chordless cycle")


def _canonical(sets: Iterable[frozenset[str]], order: dict[str, int]) -> list[frozenset[str]]:
    return sorted(sets, key=lambda s: (sorted(order[v] for v in s), len(s)))


def _bron_kerbosch(adj, r: set, p: set, x: set, out: list):
    if not p and not x:
        out.append(frozenset(r))
        return
    pivot = max(p | x, key=lambda u: len(adj[u] & p))
    for v in sorted(p - adj[pivot]):
        _bron_kerbosch(adj, r | {v}, p & adj[v], x & adj[v], out)
        p = p - {v}
        x = x | {v}


def maximal_cliques(g: Graph) -> list[frozenset[str]]:
    """Inclusion-maximal complete vertex sets in canonical order."""
    order = {v: k for k, v in enumerate(g.vertices)}
    if not g.vertices:
        return []
    mcs = max_cardinality_search(g)
    if _peo_violation(g, mcs) is None:
        earlier = _earlier_neighbours(g, mcs)
        cands = {frozenset(earlier[v] | {v}) for v in mcs}
        cliques = [c for c in cands if not any(c < o for o in cands)]
    else:
        cliques = []
        _bron_kerbosch(g.adjacency(), set(), set(g.vertices), set(), cliques)
    return _canonical(cliques, order)


def clique_class(g: Graph) -> GeneratingClass:
    """The graphical model of `g`: its maximal cliques as generators."""
    return GeneratingClass(frozenset(maximal_cliques(g)), g.vertices)


def is_graphical(gc: GeneratingClass) -> bool:
    return set(maximal_cliques(interaction_graph(gc))) == set(gc.generators)


def is_decomposable_model(gc: GeneratingClass) -> bool:
    g = interaction_graph(gc)
    return is_graphical(gc) and is_decomposable(g)


@dataclass(frozen=True)
class JunctionTree:
    cliques: tuple[frozenset[str], ...]
    separators: tuple[tuple[frozenset[str], int], ...]
    tree_edges: tuple[tuple[int, int], ...]
    ordering: tuple[str, ...]

    def multiplicity_total(self) -> int:
        return sum(nu for _, nu in self.separators)


def junction_tree(g: Graph) -> JunctionTree:
    """Maximum-weight spanning tree over the cliques of a chordal graph.

    Weight is the size of the clique intersection.  Zero-weight edges join
    components, so a disconnected graph contributes the empty separator
    with multiplicity (#components - 1).
    """
    mcs = max_cardinality_search(g)
    bad = _peo_violation(g, mcs)
    if bad is not None:
        cycle = find_chordless_cycle(g)
        raise NotDecomposableError(
            "graph is not chordal; chordless cycle " + "-".join(cycle))
    cliques = maximal_cliques(g)
    cand = sorted(((len(cliques[i] & cliques[j]), i, j)
                   for i, j in itertools.combinations(range(len(cliques)), 2)),
                  key=lambda t: (-t[0], t[1], t[2]))
    parent = list(range(len(cliques)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    for _, i, j in cand:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree.append((i, j))
    counts = Counter(cliques[i] & cliques[j] for i, j in tree)
    order = {v: k for k, v in enumerate(g.vertices)}
    seps = tuple((s, counts[s]) for s in _canonical(counts, order))
    jt = JunctionTree(tuple(cliques), seps, tuple(tree), tuple(mcs))
    assert jt.multiplicity_total() == len(cliques) - 1
    return jt


def separator_multiplicity(g: Graph, s: frozenset[str]) -> int:
    """Multiplicity from its definition: components of G - s in which s is
    not a maximal clique of the induced subgraph on s plus the component,
    minus one."""
    rest = g.subgraph(set(g.vertices) - s)
    q = 0
    for comp in rest.components():
        if s not in maximal_cliques(g.subgraph(s | comp)):
            q += 1
    return q - 1

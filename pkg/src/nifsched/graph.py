"""Interference graph: construction, cliques, components, induced cycles.

Nodes are integers ``i = k * U + u``.  Adjacency is kept as a tuple of
frozensets, which is all the schedulers need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np

MAX_CLIQUES = 10**6


class CliqueLimitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class InterferenceGraph:
    K: int
    U: int
    adj: tuple  # tuple[frozenset[int], ...], one per node

    @classmethod
    def from_edges(cls, K: int, U: int, edges) -> "InterferenceGraph":
        nbrs = [set() for _ in range(K * U)]
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            nbrs[a].add(b)
            nbrs[b].add(a)
        return cls(K, U, tuple(frozenset(s) for s in nbrs))

    @classmethod
    def from_adjacency(cls, K: int, U: int, matrix) -> "InterferenceGraph":
        m = np.asarray(matrix, dtype=bool)
        m = (m | m.T) & ~np.eye(len(m), dtype=bool)
        return cls(K, U, tuple(frozenset(np.flatnonzero(row).tolist()) for row in m))

    @property
    def n_nodes(self) -> int:
        return self.K * self.U

    def cell(self, i: int) -> int:
        return i // self.U

    def node(self, k: int, u: int) -> int:
        return k * self.U + u

    def edges(self) -> list:
        return sorted((a, b) for a in range(self.n_nodes) for b in self.adj[a] if a < b)

    @property
    def edge_count(self) -> int:
        return sum(len(s) for s in self.adj) // 2

    def degree(self, i: int) -> int:
        return len(self.adj[i])

    @cached_property
    def components(self) -> list:
        return connected_components(self)

    @cached_property
    def maximal_cliques(self) -> list:
        return enumerate_maximal_cliques(self)

    def subgraph_intra_cell(self) -> "InterferenceGraph":
        """Same nodes, inter-cell edges dropped."""
        return InterferenceGraph(self.K, self.U, tuple(
            frozenset(j for j in self.adj[i] if j // self.U == i // self.U)
            for i in range(self.n_nodes)))

    def to_edge_list(self) -> str:
        """One ``k,u k',u'`` line per edge (0-based indices)."""
        U = self.U
        return "".join(f"{a // U},{a % U} {b // U},{b % U}\n" for a, b in self.edges())

    @classmethod
    def from_edge_list(cls, K: int, U: int, text: str) -> "InterferenceGraph":
        edges = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                left, right = line.split()
                k1, u1 = (int(x) for x in left.split(","))
                k2, u2 = (int(x) for x in right.split(","))
            except ValueError:
                raise ValueError(f"line {lineno}: expected 'k,u k',u'', got {line!r}") from None
            edges.append((k1 * U + u1, k2 * U + u2))
        return cls.from_edges(K, U, edges)

    def to_json(self, max_cycle_len: int = 8) -> str:
        st = graph_stats(self, max_cycle_len=max_cycle_len)
        return json.dumps({
            "K": self.K, "U": self.U,
            "edges": [[a // self.U, a % self.U, b // self.U, b % self.U] for a, b in self.edges()],
            "stats": {
                "edge_count": st.edge_count,
                "induced_cycles": {str(k): v for k, v in st.induced_cycles.items()},
                "clique_sizes": {str(k): v for k, v in st.clique_sizes.items()},
            },
        })


def build_graph(scenario, epsilon: float) -> InterferenceGraph:
    """Edge when either user's interference-to-desired ratio exceeds ``epsilon``.

    The reference power cancels in the ratio, so only link gains matter.
    """
    H = scenario.link_gain()                  # H[i, j]: beam of i -> user j
    desired = np.diag(H)
    ratio = H / desired[None, :]              # interference from i's beam on j
    m = ratio > epsilon
    K, U = scenario.serving_beam.shape
    return InterferenceGraph.from_adjacency(K, U, m | m.T)


def connected_components(graph: InterferenceGraph) -> list:
    """Components as sorted node lists, ordered by their smallest node."""
    seen = [False] * graph.n_nodes
    comps = []
    for s in range(graph.n_nodes):
        if seen[s]:
            continue
        seen[s] = True
        stack, comp = [s], []
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in graph.adj[v]:
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def enumerate_maximal_cliques(graph: InterferenceGraph, nodes=None) -> list:
    """All maximal cliques (Bron-Kerbosch with Tomita pivoting).

    ``nodes`` restricts the search to an induced subgraph.  Cliques come
    back as sorted tuples, in sorted order.
    """
    adj = graph.adj
    universe = set(range(graph.n_nodes)) if nodes is None else set(nodes)
    out = []

    def expand(R, P, X):
        if not P and not X:
            out.append(tuple(sorted(R)))
            if len(out) > MAX_CLIQUES:
                raise CliqueLimitError(f"more than {MAX_CLIQUES} maximal cliques")
            return
        pivot = max(P | X, key=lambda v: len(P & adj[v]))
        for v in list(P - adj[pivot]):
            Nv = adj[v] & universe
            expand(R | {v}, P & Nv, X & Nv)
            P.discard(v)
            X.add(v)

    expand(set(), set(universe), set())
    return sorted(out)


def count_induced_cycles(graph: InterferenceGraph, max_len: int = 8) -> dict:
    """Number of chordless cycles of each length ``3..max_len``.

    Each cycle is found once: rooted at its smallest node, with the second
    node smaller than the last.
    """
    if max_len < 3:
        raise ValueError("max_len must be >= 3")
    adj = graph.adj
    counts = {L: 0 for L in range(3, max_len + 1)}

    def extend(path, on_path, blocked):
        # ``blocked`` counts, per node, how many interior path nodes it touches
        s, last = path[0], path[-1]
        for v in adj[last]:
            if v <= s or v in on_path or blocked.get(v, 0):
                continue
            if len(path) >= 2 and s in adj[v]:
                if path[1] < v:
                    counts[len(path) + 1] += 1
                continue
            if len(path) + 1 < max_len:
                # ``last`` becomes interior once ``v`` is appended
                touched = [w for w in adj[last] if w != v] if len(path) > 1 else []
                for w in touched:
                    blocked[w] = blocked.get(w, 0) + 1
                path.append(v)
                on_path.add(v)
                extend(path, on_path, blocked)
                on_path.discard(v)
                path.pop()
                for w in touched:
                    blocked[w] -= 1

    for s in range(graph.n_nodes):
        extend([s], {s}, {})
    return counts


@dataclass
class GraphStats:
    edge_count: int
    induced_cycles: dict
    clique_sizes: dict
    lower_bound: int | None = None


def graph_stats(graph: InterferenceGraph, d=None, N=None, max_cycle_len=8) -> GraphStats:
    sizes = {}
    for c in graph.maximal_cliques:
        sizes[len(c)] = sizes.get(len(c), 0) + 1
    lb = lower_bound_n0(graph, d, N) if d is not None else None
    return GraphStats(graph.edge_count, count_induced_cycles(graph, max_cycle_len),
                      dict(sorted(sizes.items())), lb)


def lower_bound_n0(graph: InterferenceGraph, d, N: int) -> int:
    """Clique-based lower bound on unfulfilled resource elements.

    Repeatedly takes the maximal clique of the residual graph with the
    largest demand excess over ``N`` (ties: larger clique, then lexicographic
    order), adds the excess and deletes the clique.
    """
    d = np.asarray(d).ravel()
    if np.any(d < 0) or np.any(d > N):
        raise ValueError("demands must lie in [0, N]")
    alive = set(range(graph.n_nodes))
    total = 0
    while True:
        best = None
        for c in enumerate_maximal_cliques(graph, alive):
            excess = int(d[list(c)].sum()) - N
            if excess <= 0:
                continue
            key = (-excess, -len(c), c)
            if best is None or key < best[0]:
                best = (key, c)
        if best is None:
            return total
        total += -best[0][0]
        alive.difference_update(best[1])


def brute_force_maximal_cliques(graph: InterferenceGraph) -> list:
    """Exhaustive subset enumeration; for testing small graphs only."""
    n = graph.n_nodes
    cliques = []
    for r in range(1, n + 1):
        for sub in combinations(range(n), r):
            if all(b in graph.adj[a] for a, b in combinations(sub, 2)):
                cliques.append(frozenset(sub))
    maximal = [c for c in cliques if not any(c < o for o in cliques)]
    return sorted(tuple(sorted(c)) for c in maximal)

"""NIF space-time schedulers, the schedule validator and an exact oracle.

A schedule is an int array ``S`` of shape ``(K, N_RF, N)``; ``S[k, r, n]``
is ``u + 1`` when user ``u`` of cell ``k`` is on RF chain ``r`` in slot
``n`` and ``0`` when the element is unassigned.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .graph import InterferenceGraph


class OracleSizeError(ValueError):
    pass


@dataclass
class SlotAssignment:
    """Per-node slot sets ``T`` from the RF-chain-sufficient scheduler."""

    slots: list                # list[frozenset[int]], one per node
    N: int
    available: list = field(default_factory=list)   # T' seen at selection time

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(t) for t in self.slots])


@dataclass
class ScheduleStats:
    n0: int | None
    d_hat: np.ndarray
    unassigned: int
    violations: list

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"n0": self.n0, "d_hat": self.d_hat.tolist(), "unassigned": self.unassigned,
                "violations": [list(v) for v in self.violations]}


def _traversal(graph: InterferenceGraph, d, component_order=None):
    """Yield nodes in scheduling order.

    Components are visited largest first (ties by smallest node).  Inside a
    component the start is the highest-degree node, and each next node is
    the untraversed neighbour with most traversed neighbours; ties go to
    larger demand, then smaller index.
    """
    comps = graph.components
    if component_order is None:
        comps = sorted(comps, key=lambda c: (-len(c), -max(d[i] for i in c), c[0]))
    for comp in comps:
        start = min(comp, key=lambda i: (-graph.degree(i), -d[i], i))
        yield start
        links = {}
        done = {start}
        for w in graph.adj[start]:
            links[w] = links.get(w, 0) + 1
        while len(done) < len(comp):
            v = min(links, key=lambda i: (-links[i], -d[i], i))
            del links[v]
            done.add(v)
            yield v
            for w in graph.adj[v]:
                if w not in done:
                    links[w] = links.get(w, 0) + 1


def _schedule_core(graph: InterferenceGraph, d, N: int, capacity):
    """Shared traversal of the RF-sufficient and RF-limited schedulers.

    Returns per-node slot sets, per-node available sets, and ``w[k, n]``.
    ``capacity=None`` means unlimited RF chains.

    Slots are taken in ascending ``w[k, n]``.  Among equally loaded slots the
    ones that are already off-limits to more of the node's untraversed
    neighbours come first (taking them costs those neighbours nothing), then
    slots where those neighbours' cells are busier, then the lower index.
    """
    d = np.asarray(d, dtype=int).ravel()
    if np.any(d < 0) or np.any(d > N):
        raise ValueError("demands must lie in [0, N]")
    U = graph.U
    w = np.zeros((graph.K, N), dtype=int)
    T = [frozenset()] * graph.n_nodes
    avail = [frozenset()] * graph.n_nodes
    occupants = [set() for _ in range(N)]
    done = set()
    for v in _traversal(graph, d):
        k = v // U
        blocked = set()
        for j in graph.adj[v]:
            blocked |= T[j]
        cand = [n for n in range(N) if n not in blocked
                and (capacity is None or w[k, n] < capacity)]
        avail[v] = frozenset(cand)
        ahead = [j for j in graph.adj[v] if j not in done]

        def priority(n):
            shut = sum(1 for j in ahead if graph.adj[j] & occupants[n])
            busy = sum(int(w[j // U, n]) for j in ahead)
            return (w[k, n], -shut, -busy, n)

        cand.sort(key=priority)
        chosen = cand[:d[v]]
        T[v] = frozenset(chosen)
        done.add(v)
        for n in chosen:
            w[k, n] += 1
            occupants[n].add(v)
    return T, avail, w


class _Refiner:
    """Local search that raises the served total of a valid slot assignment.

    Two moves, each keeping the assignment NIF and within RF capacity:

    * augmenting chain: a short node enters a slot, displacing at most one
      node (a blocking neighbour, or a cell-mate when the slot is full),
      which moves on to another slot, and so on until a slot has room;
    * exchange: one element is dropped from a slot so that two or more
      short nodes can enter it.

    Every applied move serves strictly more elements, so the search ends.
    """

    def __init__(self, graph, T, d, capacity, N):
        self.g, self.d, self.cap, self.N = graph, d, capacity, N
        self.T = [set(t) for t in T]
        self.w = np.zeros((graph.K, N), dtype=int)
        for i, t in enumerate(self.T):
            for n in t:
                self.w[i // graph.U, n] += 1

    def _entry(self, z, n):
        """What ``z`` must displace to join slot ``n``.

        ``None`` if it cannot join, ``[]`` if it fits as is, ``[j]`` for a
        single blocking neighbour, or ``"full"`` when any cell-mate will do.
        """
        if n in self.T[z]:
            return None
        U = self.g.U
        blockers = [j for j in self.g.adj[z] if n in self.T[j]]
        if len(blockers) > 1:
            return None
        load = self.w[z // U, n] - sum(1 for j in blockers if j // U == z // U)
        if self.cap is not None and load >= self.cap:
            return None if blockers else "full"
        return blockers

    def _move(self, node, src, dst):
        U = self.g.U
        if src is not None:
            self.T[node].discard(src)
            self.w[node // U, src] -= 1
        self.T[node].add(dst)
        self.w[node // U, dst] += 1

    def augment(self, v) -> bool:
        U, N = self.g.U, self.N
        parent = {}            # slot -> (node entering it, slot it leaves)
        queue = deque()

        def visit(z, src, n):
            need = self._entry(z, n)
            if need is None:
                return False
            parent[n] = (z, src)
            if need == []:
                cur = n
                while cur is not None:
                    node, prev = parent[cur]
                    self._move(node, prev, cur)
                    cur = prev
                return True
            queue.append((n, need))
            return False

        for n in range(N):
            if n not in parent and visit(v, None, n):
                return True
        while queue:
            n, need = queue.popleft()
            z = parent[n][0]
            if need == "full":
                base = z // U * U
                need = [x for x in range(base, base + U) if x != z and n in self.T[x]]
            for x in need:
                for n2 in range(N):
                    if n2 not in parent and visit(x, n, n2):
                        return True
        return False

    def exchange(self) -> bool:
        g, U = self.g, self.g.U
        short = [z for z in range(g.n_nodes) if len(self.T[z]) < self.d[z]]
        if len(short) < 2:
            return False
        for n in range(self.N):
            for x in [i for i in range(g.n_nodes) if n in self.T[i]]:
                load = self.w[:, n].copy()
                load[x // U] -= 1
                picked = []
                for z in sorted(short, key=lambda z: (len(g.adj[z]), z)):
                    if z == x or n in self.T[z]:
                        continue
                    if any(n in self.T[j] and j != x for j in g.adj[z]):
                        continue
                    if any(p in g.adj[z] for p in picked):
                        continue
                    if self.cap is not None and load[z // U] >= self.cap:
                        continue
                    picked.append(z)
                    load[z // U] += 1
                if len(picked) >= 2:
                    self.T[x].discard(n)
                    self.w[x // U, n] -= 1
                    for z in picked:
                        self._move(z, None, n)
                    return True
        return False

    def run(self) -> list:
        progress = True
        while progress:
            progress = False
            for v in range(self.g.n_nodes):
                while len(self.T[v]) < self.d[v] and self.augment(v):
                    progress = True
            while self.exchange():
                progress = True
        return [frozenset(t) for t in self.T]


def _assign(graph, d, N, capacity, refine):
    T, avail, _ = _schedule_core(graph, d, N, capacity)
    if refine:
        d = np.asarray(d, dtype=int).ravel()
        T = _Refiner(graph, T, d, capacity, N).run()
    return T, avail


def schedule_rf_sufficient(graph: InterferenceGraph, d, N: int, refine: bool = True) -> SlotAssignment:
    """Slot sets when every user has its own RF chain.

    ``refine=False`` returns the bare traversal without the local search.
    """
    T, avail = _assign(graph, d, N, None, refine)
    return SlotAssignment(T, N, avail)


def slots_to_matrix(graph: InterferenceGraph, T, N_RF: int, N: int) -> np.ndarray:
    """Place slot sets on RF chains, lowest free chain first."""
    S = np.zeros((graph.K, N_RF, N), dtype=int)
    fill = np.zeros((graph.K, N), dtype=int)
    for v, slots in enumerate(T):
        k, u = divmod(v, graph.U)
        for n in sorted(slots):
            if fill[k, n] >= N_RF:
                raise ValueError(f"cell {k} slot {n} over RF capacity")
            S[k, fill[k, n], n] = u + 1
            fill[k, n] += 1
    return S


def schedule_nif(graph: InterferenceGraph, d, config, refine: bool = True) -> np.ndarray:
    """RF-chain-limited NIF scheduler with least-loaded slot priority."""
    T, _ = _assign(graph, d, config.N, config.N_RF, refine)
    return slots_to_matrix(graph, T, config.N_RF, config.N)


def served_counts(S, U: int) -> np.ndarray:
    """``d_hat`` per node from a schedule matrix."""
    K = S.shape[0]
    out = np.zeros(K * U, dtype=int)
    for k in range(K):
        vals = S[k][S[k] > 0]
        np.add.at(out, k * U + vals - 1, 1)
    return out


def slot_sets(S, U: int) -> list:
    K, _, N = S.shape
    T = [set() for _ in range(K * U)]
    for k in range(K):
        for r, n in zip(*np.nonzero(S[k])):
            T[k * U + S[k, r, n] - 1].add(int(n))
    return [frozenset(t) for t in T]


def validate_schedule(S, graph: InterferenceGraph, d, config) -> ScheduleStats:
    """Check a schedule against the NIF, SDM, range and demand-cap rules.

    ``d=None`` skips the demand cap and leaves ``n0`` undefined.  Violations
    are returned as tuples ``(kind, ...)`` rather than raised.
    """
    S = np.asarray(S)
    K, U, N_RF, N = graph.K, graph.U, config.N_RF, config.N
    violations = []
    if S.shape != (K, N_RF, N):
        return ScheduleStats(None, np.zeros(K * U, dtype=int), 0,
                             [("shape", S.shape, (K, N_RF, N))])
    bad = np.argwhere((S < 0) | (S > U))
    for k, r, n in bad:
        violations.append(("range", int(k), int(r), int(n), int(S[k, r, n])))
    S = np.where((S < 0) | (S > U), 0, S)
    for k in range(K):
        for n in range(N):
            col = S[k, :, n]
            col = col[col > 0]
            if len(set(col.tolist())) != len(col):
                violations.append(("sdm", k, n))
    for n in range(N):
        active = [k * U + int(u) - 1 for k in range(K) for u in S[k, :, n] if u > 0]
        for a, b in combinations(sorted(set(active)), 2):
            if b in graph.adj[a]:
                violations.append(("nif", n, a, b))
    d_hat = served_counts(S, U)
    n0 = None
    if d is not None:
        d = np.asarray(d, dtype=int).ravel()
        for i in np.flatnonzero(d_hat > d):
            violations.append(("demand", int(i), int(d_hat[i]), int(d[i])))
        n0 = int((d - d_hat).sum())
    return ScheduleStats(n0, d_hat, int((S == 0).sum()), violations)


def feasible_slot_sets(graph: InterferenceGraph, N_RF: int, maximal_only=True) -> list:
    """Node sets that may share one slot: independent, at most ``N_RF`` per cell."""
    n = graph.n_nodes
    sets = []
    for mask in range(1 << n):
        nodes = [i for i in range(n) if mask >> i & 1]
        cells = np.bincount([i // graph.U for i in nodes], minlength=graph.K) if nodes else None
        if nodes and cells.max() > N_RF:
            continue
        if any(b in graph.adj[a] for a, b in combinations(nodes, 2)):
            continue
        sets.append(mask)
    if maximal_only:
        sets = [m for m in sets if not any(o != m and (o & m) == m for o in sets)]
    return sets


def brute_force_optimal_n0(graph: InterferenceGraph, d, config) -> int:
    """Exact minimum of unfulfilled elements, by exhaustive search.

    Slots are interchangeable, so the search runs over capped served-count
    vectors slot by slot; every slot takes one inclusion-maximal feasible
    node set (serving a superset never hurts once counts are capped at ``d``).
    """
    n, N, N_RF = graph.n_nodes, config.N, config.N_RF
    if n > 8 or N > 6 or N_RF > 2:
        raise OracleSizeError("oracle limited to 8 users, N <= 6, N_RF <= 2")
    d = tuple(int(x) for x in np.asarray(d).ravel())
    if any(x < 0 or x > N for x in d):
        raise ValueError("demands must lie in [0, N]")
    members = [[i for i in range(n) if m >> i & 1] for m in feasible_slot_sets(graph, N_RF)]
    states = {tuple([0] * n)}
    for _ in range(N):
        nxt = set()
        for st in states:
            for mem in members:
                s = list(st)
                for i in mem:
                    if s[i] < d[i]:
                        s[i] += 1
                nxt.add(tuple(s))
        states = nxt
    return sum(d) - max(sum(s) for s in states)


def schedule_to_json(S) -> str:
    """Cells -> RF rows -> slots, as nested lists."""
    return json.dumps({"schedule": np.asarray(S).tolist()})


def schedule_from_json(text: str) -> np.ndarray:
    return np.asarray(json.loads(text)["schedule"], dtype=int)


def schedule_to_csv(S) -> str:
    """Rows ``k,r,n,user`` for every assigned element (user is 1-based)."""
    S = np.asarray(S)
    lines = ["k,r,n,user"]
    for k, r, n in np.argwhere(S > 0):
        lines.append(f"{k},{r},{n},{S[k, r, n]}")
    return "\n".join(lines) + "\n"


def random_demands(config, rng) -> np.ndarray:
    """Random integer demands in ``[0, N]`` summing to ``N_RF * N`` per cell.

    Each cell splits its ``N_RF * N`` elements with uniform-simplex weights,
    rounds down, then hands out the remainder one element at a time to
    random users still below ``N``.
    """
    K, U, N, N_RF = config.K, config.U, config.N, config.N_RF
    total = N_RF * N
    if total > U * N:
        raise ValueError("N_RF * N exceeds what U users can absorb")
    d = np.zeros((K, U), dtype=int)
    for k in range(K):
        weights = rng.dirichlet(np.ones(U))
        row = np.minimum(np.floor(weights * total).astype(int), N)
        while row.sum() < total:
            open_ = np.flatnonzero(row < N)
            row[rng.choice(open_)] += 1
        d[k] = row
    return d.ravel()


class ZeroBoundUnavailable(RuntimeError):
    """No zero-bound demand vector was found for this graph."""


def random_zero_bound_demands(graph: InterferenceGraph, config, rng, preserve_sum=False,
                              max_moves=2000, restarts=20):
    """Random demands for which the clique lower bound is zero.

    The bound is zero exactly when no maximal clique asks for more than
    ``N`` slots.  Starting from :func:`random_demands`:

    * default: pick a random over-full clique and resample each member's
      demand uniformly from ``0..d``; repeat until none is over-full.  Cell
      totals can only drop below ``N_RF * N``.
    * ``preserve_sum=True``: move single elements from members of over-full
      cliques to cell-mates outside them, keeping every cell total at
      ``N_RF * N``.  Some graphs admit no such vector (a cell whose cliques
      cap its total lower), so after ``restarts`` failed repairs
      :class:`ZeroBoundUnavailable` is raised.
    """
    N, U = config.N, graph.U
    cliques = [c for c in graph.maximal_cliques if len(c) > 1]
    if not preserve_sum:
        d = random_demands(config, rng)
        while True:
            over = [c for c in cliques if d[list(c)].sum() > N]
            if not over:
                return d
            for v in over[rng.integers(len(over))]:
                d[v] = rng.integers(0, d[v] + 1)
    member_of = [[] for _ in range(graph.n_nodes)]
    for ci, c in enumerate(cliques):
        for v in c:
            member_of[v].append(ci)
    for _ in range(restarts):
        d = random_demands(config, rng)
        load = np.array([d[list(c)].sum() for c in cliques], dtype=int)
        for _ in range(max_moves):
            bad = np.flatnonzero(load > N)
            if len(bad) == 0:
                return d
            c = cliques[rng.choice(bad)]
            donors = [v for v in c if d[v] > 0]
            v = donors[rng.integers(len(donors))]
            k = v // U
            cell = range(k * U, (k + 1) * U)
            takers = [j for j in cell if j not in c and d[j] < N
                      and all(load[ci] < N for ci in member_of[j])]
            if not takers:
                takers = [j for j in cell if j not in c and d[j] < N]
            if not takers:
                break
            j = takers[rng.integers(len(takers))]
            d[v] -= 1
            d[j] += 1
            load[member_of[v]] -= 1
            load[member_of[j]] += 1
    raise ZeroBoundUnavailable(f"no zero-bound demands after {restarts} repairs")

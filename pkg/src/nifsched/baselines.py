"""Comparison schedulers: per-slot greedy, uncoordinated cells, IS-based.

These are reimplementations with fixed internal rules; the cited schemes do
not pin down their tie-breaking, so the choices here are our own.
"""

from __future__ import annotations

import numpy as np

from .graph import InterferenceGraph
from .scheduler import schedule_nif, served_counts


def schedule_greedy_per_slot(graph: InterferenceGraph, d, config) -> np.ndarray:
    """Fill each slot in turn with the neediest users that still fit.

    Inside a slot, the user with the largest remaining demand (lowest index
    on ties) is added while it has no neighbour in the slot and its cell has
    a free RF chain.
    """
    K, U, N_RF, N = graph.K, graph.U, config.N_RF, config.N
    remaining = np.asarray(d, dtype=int).ravel().copy()
    S = np.zeros((K, N_RF, N), dtype=int)
    order = np.arange(graph.n_nodes)
    for n in range(N):
        used = np.zeros(K, dtype=int)
        chosen = set()
        # stable sort keeps the lowest index first among equal demands
        for v in order[np.argsort(-remaining, kind="stable")]:
            if remaining[v] <= 0:
                break
            k = v // U
            if used[k] >= N_RF or graph.adj[v] & chosen:
                continue
            chosen.add(int(v))
            S[k, used[k], n] = v % U + 1
            used[k] += 1
        for v in chosen:
            remaining[v] -= 1
    return S


def schedule_uncoordinated(graph: InterferenceGraph, d, config) -> np.ndarray:
    """Cells schedule alone, then inter-cell clashes are muted.

    Each cell runs the NIF scheduler on its intra-cell subgraph only.  For
    every slot with an inter-cell conflict, the element of the user with the
    larger per-cell served count is muted (higher cell index on ties), until
    the slot is conflict-free.  The counts are taken before any muting, so a
    clash between the same two users is always settled the same way.
    """
    U = graph.U
    S = schedule_nif(graph.subgraph_intra_cell(), d, config).copy()
    d_hat = served_counts(S, U)
    for n in range(config.N):
        while True:
            active = {}
            for k in range(graph.K):
                for r in np.flatnonzero(S[k, :, n]):
                    active[k * U + int(S[k, r, n]) - 1] = (k, int(r))
            clashes = [(a, b) for a in active for b in graph.adj[a]
                       if b in active and a < b]
            if not clashes:
                break
            # resolve the clash involving the busiest user first
            a, b = max(clashes, key=lambda e: max((d_hat[e[0]], e[0] // U), (d_hat[e[1]], e[1] // U)))
            victim = max((a, b), key=lambda v: (d_hat[v], v // U))
            k, r = active[victim]
            S[k, r, n] = 0
    return S


def group_independent_sets(graph: InterferenceGraph, users, N_RF: int) -> list:
    """First-fit grouping of ``users`` into independent sets.

    Each set holds at most ``N_RF`` users per cell.  Users are placed in the
    order given, into the first set with no neighbour and a free RF chain.
    """
    groups, cells = [], []
    for v in users:
        k = v // graph.U
        for g, c in zip(groups, cells):
            if c.get(k, 0) < N_RF and not graph.adj[v] & g:
                g.add(v)
                c[k] = c.get(k, 0) + 1
                break
        else:
            groups.append({v})
            cells.append({k: 1})
    return [sorted(g) for g in groups]


def apportion(weights, total: int) -> np.ndarray:
    """Largest-remainder split of ``total`` integer units by ``weights``.

    Ties in the remainder go to the earlier entry.
    """
    w = np.asarray(weights, dtype=float)
    if len(w) == 0:
        return np.zeros(0, dtype=int)
    if w.sum() <= 0:
        w = np.ones_like(w)
    share = total * w / w.sum()
    out = np.floor(share).astype(int)
    left = total - out.sum()
    order = np.argsort(-(share - out), kind="stable")
    out[order[:left]] += 1
    return out


def schedule_is_based(graph: InterferenceGraph, gamma, csi, config):
    """Independent-set time sharing, topped up by the element filler.

    Users with a rate requirement are grouped into independent sets, most
    demanding first.  Each set gets a block of consecutive slots in
    proportion to the largest minimum element count among its members;
    every member uses all of its set's slots.  With many small sets the
    rounding can leave a set with no slot at all.  Unassigned elements are then
    handed out and powers computed as in the proposed scheme.

    Returns ``(S, P, best_effort)``; ``best_effort`` is set when some user
    received fewer slots than it needs at ``Pmax``.
    """
    from .power import fill_and_allocate_power, min_required_elements

    K, U, N_RF, N = graph.K, graph.U, config.N_RF, config.N
    gamma = np.ravel(np.asarray(gamma, dtype=float))
    beta = np.ravel(csi.beta)
    need = np.ravel(min_required_elements(gamma, beta, N, config.W_Hz, config.Pmax_W))
    users = sorted(np.flatnonzero(gamma > 0).tolist(), key=lambda v: (-need[v], v))
    groups = group_independent_sets(graph, users, N_RF)
    slots = apportion([min(N, max(need[v] for v in g)) for g in groups], N)
    S = np.zeros((K, N_RF, N), dtype=int)
    start = 0
    for g, count in zip(groups, slots):
        fill = {}
        for v in g:
            k = v // U
            r = fill.get(k, 0)
            S[k, r, start:start + count] = v % U + 1
            fill[k] = r + 1
        start += count
    S, P = fill_and_allocate_power(S, graph, beta, gamma, config)
    d_hat = served_counts(S, U)
    best_effort = bool(np.any(d_hat[users] < need[users])) if users else False
    return S, P, best_effort

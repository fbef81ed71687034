import json
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nifsched.config import RadioConfig
from nifsched.graph import (CliqueLimitError, InterferenceGraph, brute_force_maximal_cliques,
                            build_graph, connected_components, count_induced_cycles,
                            enumerate_maximal_cliques, graph_stats, lower_bound_n0)
from nifsched.scenario import NetworkScenario, build_scenario, scenario_from_geometry

from strategies import graphs


def cycle(n, K=1):
    return InterferenceGraph.from_edges(K, n // K, [(i, (i + 1) % n) for i in range(n)])


def complete(n):
    return InterferenceGraph.from_edges(1, n, combinations(range(n), 2))


# ----------------------------------------------------------------- building

def _eq3_oracle(sc, eps):
    """Edge test written out per user pair, straight from the ratio definition."""
    K, U = sc.serving_beam.shape
    n = K * U
    adj = np.zeros((n, n), dtype=bool)
    for k, u, j, v in np.ndindex(K, U, K, U):
        a, b = k * U + u, j * U + v
        if a == b:
            continue
        interf = sc.path_loss_lin[k, j, v] * sc.gain_cache[k, u, j, v]
        desired = sc.path_loss_lin[j, j, v] * sc.gain_cache[j, v, j, v]
        if interf / desired > eps:
            adj[a, b] = adj[b, a] = True
    return adj


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("eps", [0.02, 0.08, 0.3])
def test_build_graph_matches_pairwise_ratio(seed, eps):
    sc = build_scenario(RadioConfig(), seed)
    g = build_graph(sc, eps)
    oracle = _eq3_oracle(sc, eps)
    for a in range(g.n_nodes):
        assert g.adj[a] == frozenset(np.flatnonzero(oracle[a]).tolist())


def test_colocated_users_share_an_edge():
    cfg = RadioConfig(K=1, U=2)
    sc = scenario_from_geometry(cfg, [[0, 0]], [[[40.0, 5.0], [40.01, 5.0]]],
                                los_flag=np.ones((1, 1, 2), bool))
    assert sc.serving_beam[0, 0] == sc.serving_beam[0, 1]
    assert build_graph(sc, 0.08).edge_count == 1


def test_far_side_lobe_user_has_no_edge():
    cfg = RadioConfig(K=2, U=1)
    # each user sits right next to its BS, on the side facing away from the other cell
    sc = scenario_from_geometry(cfg, [[0, 0], [400, 0]], [[[-10.0, 0.0]], [[410.0, 0.0]]],
                                los_flag=np.ones((2, 2, 1), bool))
    ratio = sc.link_gain()[0, 1] / sc.link_gain()[1, 1]
    assert ratio <= 0.08
    assert build_graph(sc, 0.08).edge_count == 0


def test_equal_gains_above_unit_threshold_gives_no_edges():
    cfg = RadioConfig(K=2, U=2)
    sc = NetworkScenario(cfg, np.zeros((2, 2)), np.zeros((2, 2, 2)), np.ones((2, 2, 2), bool),
                         np.full((2, 2, 2), 1e-10), np.zeros((2, 2), int), np.full((2, 2, 2, 2), 3.0))
    assert build_graph(sc, 1.0 + 1e-6).edge_count == 0
    assert build_graph(sc, 0.5).edge_count == 6


def test_edges_invariant_under_power_scaling():
    sc = build_scenario(RadioConfig(), 4)
    scaled = NetworkScenario(sc.config, sc.bs_pos, sc.user_pos, sc.los_flag,
                             sc.path_loss_lin * 37.0, sc.serving_beam, sc.gain_cache)
    assert build_graph(sc, 0.08).edges() == build_graph(scaled, 0.08).edges()


def test_self_loop_rejected():
    with pytest.raises(ValueError):
        InterferenceGraph.from_edges(1, 2, [(1, 1)])


# --------------------------------------------------------------- components

def test_components_examples():
    assert connected_components(InterferenceGraph.from_edges(2, 3, [])) == [[i] for i in range(6)]
    assert connected_components(InterferenceGraph.from_edges(1, 3, [(0, 1), (1, 2)])) == [[0, 1, 2]]
    two = InterferenceGraph.from_edges(2, 3, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    assert connected_components(two) == [[0, 1, 2], [3, 4, 5]]


@given(graphs(max_cells=3, max_users=5))
def test_components_partition_and_are_closed(g):
    comps = g.components
    assert sorted(v for c in comps for v in c) == list(range(g.n_nodes))
    where = {v: i for i, c in enumerate(comps) for v in c}
    assert all(where[a] == where[b] for a, b in g.edges())


# ------------------------------------------------------------------ cliques

def test_clique_examples():
    assert enumerate_maximal_cliques(complete(3)) == [(0, 1, 2)]
    path = InterferenceGraph.from_edges(1, 3, [(0, 1), (1, 2)])
    assert enumerate_maximal_cliques(path) == [(0, 1), (1, 2)]


@settings(max_examples=150, deadline=None)
@given(graphs(max_cells=3, max_users=4))
def test_cliques_match_brute_force(g):
    assert enumerate_maximal_cliques(g) == brute_force_maximal_cliques(g)


@given(graphs(max_cells=4, max_users=4))
def test_cliques_are_maximal_cliques(g):
    for c in g.maximal_cliques:
        assert all(b in g.adj[a] for a, b in combinations(c, 2))
        common = set(range(g.n_nodes)).difference(c)
        for v in c:
            common &= g.adj[v]
        assert not common


def test_clique_limit(monkeypatch):
    import nifsched.graph as graph_mod
    monkeypatch.setattr(graph_mod, "MAX_CLIQUES", 2)
    with pytest.raises(CliqueLimitError):
        enumerate_maximal_cliques(InterferenceGraph.from_edges(1, 6, []))


# ----------------------------------------------------------- induced cycles

def test_induced_cycle_examples():
    assert count_induced_cycles(cycle(5), 5) == {3: 0, 4: 0, 5: 1}
    chord = InterferenceGraph.from_edges(1, 4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    assert count_induced_cycles(chord, 4) == {3: 2, 4: 0}
    assert count_induced_cycles(complete(4), 4) == {3: 4, 4: 0}


def _brute_force_induced_cycles(g, max_len):
    counts = {L: 0 for L in range(3, max_len + 1)}
    for L in range(3, min(max_len, g.n_nodes) + 1):
        for sub in combinations(range(g.n_nodes), L):
            s = set(sub)
            if any(len(g.adj[v] & s) != 2 for v in sub):
                continue
            seen, stack = {sub[0]}, [sub[0]]
            while stack:
                for w in g.adj[stack.pop()] & s:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            counts[L] += len(seen) == L
    return counts


@settings(max_examples=150, deadline=None)
@given(graphs(max_cells=3, max_users=3))
def test_induced_cycles_match_brute_force(g):
    assert count_induced_cycles(g, 8) == _brute_force_induced_cycles(g, 8)


def test_triangle_count_equals_three_cycles():
    g = build_graph(build_scenario(RadioConfig(), 0), 0.02)
    triangles = sum(1 for a, b, c in combinations(range(g.n_nodes), 3)
                    if b in g.adj[a] and c in g.adj[a] and c in g.adj[b])
    assert count_induced_cycles(g, 3)[3] == triangles


def test_max_len_validation():
    with pytest.raises(ValueError):
        count_induced_cycles(cycle(4), 2)


# ------------------------------------------------------------- lower bound

def test_lower_bound_examples():
    assert lower_bound_n0(complete(3), [8, 8, 8], 16) == 8
    assert lower_bound_n0(InterferenceGraph.from_edges(2, 3, []), [16, 3, 9, 16, 0, 1], 16) == 0
    two = InterferenceGraph.from_edges(2, 2, [(0, 1), (2, 3)])
    assert lower_bound_n0(two, [10, 10, 9, 9], 16) == 6
    with pytest.raises(ValueError):
        lower_bound_n0(two, [17, 0, 0, 0], 16)


def test_lower_bound_picks_largest_excess_first():
    # path 0-1-2: cliques {0,1} excess 4 and {1,2} excess 8; taking {1,2} first leaves 0 alone
    path = InterferenceGraph.from_edges(1, 3, [(0, 1), (1, 2)])
    assert lower_bound_n0(path, [6, 14, 10], 16) == 8


# ---------------------------------------------------------------- surfaces

def test_edge_list_round_trip_and_json():
    g = build_graph(build_scenario(RadioConfig(), 1), 0.08)
    text = g.to_edge_list()
    assert InterferenceGraph.from_edge_list(g.K, g.U, text).edges() == g.edges()
    doc = json.loads(g.to_json())
    assert doc["stats"]["edge_count"] == g.edge_count == len(doc["edges"])


def test_edge_list_parse_error_has_line_number():
    with pytest.raises(ValueError, match="line 2"):
        InterferenceGraph.from_edge_list(1, 3, "0,0 0,1\n0,1 zero\n")


def test_graph_stats():
    st_ = graph_stats(complete(3), d=[8, 8, 8], N=16, max_cycle_len=4)
    assert st_.edge_count == 3 and st_.clique_sizes == {3: 1}
    assert st_.induced_cycles == {3: 1, 4: 0} and st_.lower_bound == 8

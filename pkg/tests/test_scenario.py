import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nifsched.config import ConfigError, RadioConfig
from nifsched.scenario import (NetworkScenario, beam_gain, beam_gain_all, beam_geometry,
                               best_beams, build_hex_layout, build_scenario, drop_users,
                               gen_rate_requirements, in_hexagon, los_probability, noise_power_dbm,
                               path_loss_db, rate_requirements_for_seed, select_serving_beam)

CFG = RadioConfig()


# ---------------------------------------------------------------- layout

def test_single_cell_layout():
    assert build_hex_layout(1, 100).tolist() == [[0.0, 0.0]]


def test_seven_cell_ring_distance_and_angles():
    pos = build_hex_layout(7, 100)
    assert pos[0].tolist() == [0.0, 0.0]
    dist = np.hypot(pos[1:, 0], pos[1:, 1])
    assert dist == pytest.approx(np.full(6, 173.205), abs=1e-3)
    ang = np.degrees(np.arctan2(pos[1:, 1], pos[1:, 0])) % 360
    assert ang == pytest.approx(np.arange(0, 360, 60), abs=1e-9)


def test_unsupported_cell_count_needs_coordinates():
    with pytest.raises(ConfigError):
        build_hex_layout(5, 100)
    assert build_hex_layout(2, 100, coords=[[0, 0], [300, 0]]).shape == (2, 2)


def test_neighbouring_hexagons_share_an_edge_without_overlap():
    # the midpoint between two BSs lies on the shared flat side
    mid = build_hex_layout(7, 100)[1] / 2
    assert in_hexagon(mid, 100)[0]
    assert not in_hexagon(mid * 1.001, 100)[0]


def test_drop_users_zero():
    assert drop_users(build_hex_layout(7, 100), 0, 100, np.random.default_rng(0)).shape == (7, 0, 2)


def test_drop_users_uniform_mean_near_centre():
    pts = drop_users(np.zeros((1, 2)), 100_000, 100, np.random.default_rng(1))[0]
    assert np.all(in_hexagon(pts, 100))
    assert np.hypot(*pts.mean(axis=0)) < 2.0
    # uniform over the hexagon: mean squared radius is 5/12 R^2
    assert np.mean(np.sum(pts ** 2, axis=1)) == pytest.approx(5 / 12 * 100 ** 2, rel=0.01)


def test_drop_users_deterministic():
    lay = build_hex_layout(7, 100)
    a = drop_users(lay, 8, 100, np.random.default_rng(5))
    b = drop_users(lay, 8, 100, np.random.default_rng(5))
    assert np.array_equal(a, b)


# ------------------------------------------------------------ propagation

def test_path_loss_values():
    assert path_loss_db(100, True, 28) == pytest.approx(101.34, abs=0.01)
    assert path_loss_db(100, False, 28) == pytest.approx(120.64, abs=0.01)
    assert path_loss_db(1, True, 1) == pytest.approx(32.4)
    with pytest.raises(ValueError):
        path_loss_db(0.0, True, 28)


@given(st.floats(0.1, 1e4), st.floats(1.0, 1.5), st.booleans())
def test_path_loss_monotone(d, factor, los):
    assert path_loss_db(d * factor, los, 28) >= path_loss_db(d, los, 28)


def test_los_probability_values():
    assert los_probability(18.0) == 1.0
    assert los_probability(63.0) == pytest.approx(18 / 63 + math.exp(-(1 - 18 / 63)), abs=1e-12)
    assert los_probability(63.0) == pytest.approx(0.775, abs=1e-3)
    assert los_probability(1e6) < 1e-4


@given(st.floats(1e-3, 1e4))
def test_los_probability_in_unit_interval(d):
    assert 0.0 <= los_probability(d) <= 1.0


def test_noise_power():
    assert noise_power_dbm(250e6, 6) == pytest.approx(-84.02, abs=0.01)
    assert noise_power_dbm(1, 0) == -174.0
    assert noise_power_dbm(1e9, 0) == pytest.approx(-84.0)


# ------------------------------------------------------------------ beams

def test_boresight_gain_is_array_size():
    _, theta_b, _, _ = beam_geometry(16)
    for b in range(32):
        assert beam_gain(b, theta_b[b], 16, CFG.g_min) == pytest.approx(16.0, rel=1e-6)


def test_boresight_limit_near_singularity():
    s, theta_b, _, _ = beam_geometry(16)
    theta = math.asin(s[3] + 1e-9)
    assert beam_gain(3, theta, 16, CFG.g_min) == pytest.approx(16.0, rel=1e-6)


def test_side_lobe_floor():
    # the back-facing beam 16 sees g_min towards the front boresight of beam 0
    assert beam_gain(16, 0.0, 16, CFG.g_min) == pytest.approx(0.2512, abs=1e-4)


def test_adjacent_lobe_crossover():
    N_t = 16
    s, theta_b, _, _ = beam_geometry(N_t)
    theta = math.asin((s[0] + s[1]) / 2)
    g0, g1 = beam_gain(0, theta, N_t, CFG.g_min), beam_gain(1, theta, N_t, CFG.g_min)
    exact = 1.0 / (N_t * math.sin(math.pi / (2 * N_t)) ** 2)
    assert g0 == pytest.approx(g1) == pytest.approx(exact)
    # the large-array approximation 4 N_t / pi^2 is within half a percent
    assert g0 == pytest.approx(4 * N_t / math.pi ** 2, rel=5e-3)


def test_beam_index_range():
    with pytest.raises(ValueError):
        beam_gain(32, 0.0, 16, CFG.g_min)


def test_serving_beam_on_boresight_and_tie():
    assert select_serving_beam((0, 0), (10, 0), 16, CFG.g_min) == 0
    s, _, _, _ = beam_geometry(16)
    theta = math.asin((s[0] + s[1]) / 2)
    assert select_serving_beam((0, 0), (math.cos(theta), math.sin(theta)), 16, CFG.g_min) == 0
    with pytest.raises(ValueError):
        select_serving_beam((1, 1), (1, 1), 16, CFG.g_min)


@pytest.mark.parametrize("N_t", [4, 8, 16])
def test_full_azimuth_coverage(N_t):
    theta = np.linspace(-math.pi, math.pi, 20001)
    g = beam_gain_all(theta, N_t, CFG.g_min)
    best = g[best_beams(theta, N_t, CFG.g_min), np.arange(len(theta))]
    assert np.all(best >= g.max(axis=0) - 1e-12)
    assert best.min() >= 1.0 / (N_t * math.sin(math.pi / (2 * N_t)) ** 2) - 1e-9


def test_main_lobe_edges_are_nulls():
    N_t = 16
    s, theta_b, lo, hi = beam_geometry(N_t)
    for b in (2, 5, 20):
        edge = theta_b[b] + hi[b] * (1 - 1e-6)
        assert beam_gain(b, edge, N_t, 0.0) < 1e-6
        assert beam_gain(b, theta_b[b] + hi[b] * 1.01, N_t, CFG.g_min) == CFG.g_min


# --------------------------------------------------------------- scenario

def test_scenario_invariants():
    sc = build_scenario(CFG, 3)
    K, U = CFG.K, CFG.U
    assert sc.path_loss_lin.shape == (K, K, U) and np.all(sc.path_loss_lin > 0)
    # main-lobe gains dip towards the nulls, so only 0 bounds the cache from below
    assert np.all(sc.gain_cache >= 0.0) and np.all(sc.gain_cache <= CFG.N_t + 1e-9)
    k = np.arange(K)
    assert np.all(sc.los_flag[k, k, :])
    # each user's serving beam is the strongest at its azimuth
    for kk in range(K):
        for u in range(U):
            dx, dy = sc.user_pos[kk, u] - sc.bs_pos[kk]
            g = beam_gain_all(math.atan2(dy, dx), CFG.N_t, CFG.g_min)
            assert g[sc.serving_beam[kk, u]] >= g.max() - 1e-12


def test_scenario_deterministic_and_json_round_trip():
    a, b = build_scenario(CFG, 11), build_scenario(CFG, 11)
    assert a.to_json() == b.to_json()
    doc = json.loads(a.to_json())
    assert doc["rng_seed"] == 11
    c = NetworkScenario.from_json(a.to_json())
    assert np.allclose(c.path_loss_lin, a.path_loss_lin, rtol=1e-12)
    assert np.array_equal(c.serving_beam, a.serving_beam)
    assert np.allclose(c.link_gain(), a.link_gain(), rtol=1e-12)


def test_link_gain_layout():
    sc = build_scenario(CFG, 2)
    H = sc.link_gain()
    U = CFG.U
    i, j = 1 * U + 3, 4 * U + 5
    assert H[i, j] == sc.path_loss_lin[1, 4, 5] * sc.gain_cache[1, 3, 4, 5]
    assert np.allclose(np.diag(H).reshape(CFG.K, U), sc.alpha)


def test_rate_requirements_interval():
    g = gen_rate_requirements(CFG, np.random.default_rng(0)).gamma
    assert g.shape == (7, 8)
    assert g.min() >= 125e6 and g.max() <= 500e6
    lo = gen_rate_requirements(CFG, None, X=np.ones((7, 8))).gamma
    assert np.all(lo == 125e6)
    assert np.array_equal(rate_requirements_for_seed(CFG, 4).gamma,
                          rate_requirements_for_seed(CFG, 4).gamma)

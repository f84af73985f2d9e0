import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cachebeam.netgen import (ChannelParams, ScenarioConfig, Scenario, Topology, TopologyConfig,
                              build_scenario, cache_mpc, cache_probc, channel_amplitude,
                              gen_channels, gen_topology, group_by_request, hex_centers,
                              make_catalog, pathloss_db, sample_requests_and_group,
                              zipf_popularity)
from cachebeam.units import db_to_lin, lin_to_db


# ---- topology

def test_single_bs_without_users():
    topo = gen_topology(TopologyConfig(n_bs=1, n_users=0), seed=0)
    np.testing.assert_array_equal(topo.bs_pos, [[0.0, 0.0]])
    assert topo.user_pos.shape == (0, 2)


def test_seven_cell_layout_neighbour_spacing():
    centers = hex_centers(7, math.sqrt(3.0) * 500.0)
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    spacing = math.sqrt(3.0) * 500.0
    # centre cell touches all six ring cells, each ring cell touches two ring neighbours
    np.testing.assert_allclose(d[0, 1:], spacing, rtol=1e-12)
    for i in range(1, 7):
        nxt = 1 + i % 6
        assert d[i, nxt] == pytest.approx(spacing, rel=1e-12)
    adjacent = np.isclose(d, spacing, rtol=1e-9)
    assert adjacent.sum() == 2 * 12      # 12 edges in the 7-cell cluster


@given(st.integers(0, 2**32 - 1))
def test_users_respect_exclusion_radius(seed):
    topo = gen_topology(TopologyConfig(), seed)
    assert topo.n_users == 15
    assert np.all(topo.distances() >= 50.0)


def test_users_lie_inside_the_cluster():
    topo = gen_topology(TopologyConfig(n_users=500), seed=1)
    d = topo.distances()
    # every user belongs to some hexagon, so its nearest BS is within one circumradius
    assert np.all(d.min(axis=1) <= 500.0 + 1e-9)


def test_topology_validation():
    with pytest.raises(ValueError):
        TopologyConfig(exclusion_radius=600.0)
    with pytest.raises(ValueError):
        TopologyConfig(n_bs=0)


def test_placement_retry_cap():
    cfg = TopologyConfig(n_bs=1, n_users=3, cell_radius=500.0, exclusion_radius=499.9,
                         max_draws_per_user=5)
    with pytest.raises(ValueError, match="retry cap"):
        gen_topology(cfg, seed=0)


# ---- channels

def test_amplitude_at_one_kilometre():
    # 10^(-148.1/20) evaluated independently
    expected = math.pow(10.0, -7.405)
    assert channel_amplitude(1000.0, 1.0, 1.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(3.936e-8, rel=1e-3)


def test_pathloss_formula():
    assert pathloss_db(1000.0) == pytest.approx(148.1)
    assert pathloss_db(100.0) == pytest.approx(148.1 - 37.6)


def test_channels_deterministic_per_seed():
    topo = gen_topology(TopologyConfig(), seed=4)
    a = gen_channels(topo, ChannelParams(), 2, seed=9)
    b = gen_channels(topo, ChannelParams(), 2, seed=9)
    c = gen_channels(topo, ChannelParams(), 2, seed=10)
    assert a.shape == (15, 7, 2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_small_scale_fading_second_moment():
    # one user at 1 km, no shadowing, unit gain: the channel is exactly the fading times 10^(-PL/20)
    topo = Topology(np.zeros((1, 2)), np.array([[1000.0, 0.0]]), 500.0)
    params = ChannelParams(antenna_gain_dBi=0.0, shadowing_sigma_dB=0.0)
    L = 2
    amp = math.pow(10.0, -148.1 / 20.0)
    energy = [np.sum(np.abs(gen_channels(topo, params, L, seed=s)) ** 2) / amp**2
              for s in range(10_000)]
    assert np.mean(energy) == pytest.approx(L, rel=0.05)


def test_nonpositive_distance_rejected():
    topo = Topology(np.zeros((1, 2)), np.zeros((1, 2)), 500.0)
    with pytest.raises(ValueError):
        gen_channels(topo, ChannelParams(), 2, seed=0)


def test_db_conversions_roundtrip():
    assert db_to_lin(10.0) == pytest.approx(10.0)
    assert lin_to_db(db_to_lin(5.0)) == pytest.approx(5.0)
    assert lin_to_db(0.0) == -np.inf


# ---- popularity, requests, grouping

def test_zipf_single_file():
    np.testing.assert_array_equal(zipf_popularity(1, 1.2), [1.0])


def test_zipf_two_files():
    np.testing.assert_allclose(zipf_popularity(2, 1.0), [2 / 3, 1 / 3], rtol=1e-15)


def test_zipf_head_probability_against_direct_sum():
    harmonic = 0.0
    for k in range(1, 101):
        harmonic += k ** -1.2
    assert zipf_popularity(100, 1.2)[0] == pytest.approx(1.0 / harmonic, rel=1e-13)


@given(st.integers(1, 300), st.floats(0.0, 3.0))
def test_zipf_is_a_monotone_distribution(n, a):
    p = zipf_popularity(n, a)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(np.diff(p) <= 1e-15)


def test_all_users_same_file_form_one_group():
    g = group_by_request([0, 0, 0], 2.0)
    assert g.n_groups == 1 and g.members == ((0, 1, 2),)


def test_grouping_by_equal_requests():
    # files 1,5,1,7 (1-based) requested by users 1..4
    g = group_by_request([0, 4, 0, 6], 2.0)
    assert g.n_groups == 3
    assert g.members == ((0, 2), (1,), (3,))
    assert g.requested_file == (0, 4, 6)
    np.testing.assert_array_equal(g.target_sinr, [2.0, 2.0, 2.0])


@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_grouping_is_a_partition(seed, n_users):
    g = sample_requests_and_group(make_catalog(100, 1.2), n_users, 3.0, seed)
    flat = list(itertools.chain.from_iterable(g.members))
    assert sorted(flat) == list(range(n_users))
    assert len(set(g.requested_file)) == g.n_groups
    assert 1 <= g.n_groups <= min(n_users, 100)
    assert np.all(g.user_group(n_users) >= 0)


# ---- caches

def test_mpc_examples():
    cat = make_catalog(100, 1.2)
    assert not cache_mpc(cat, 0, 7).c.any()
    c10 = cache_mpc(cat, 10, 7).c
    assert np.all(c10[:10] == 1) and not c10[10:].any()
    assert cache_mpc(cat, 100, 7).c.all()


@given(st.integers(0, 50))
def test_mpc_support_is_the_head(y):
    c = cache_mpc(make_catalog(50, 1.2), y, 3).c
    for j in range(3):
        assert set(np.flatnonzero(c[:, j])) == set(range(y))


def test_probc_full_cache_is_all_ones():
    cat = make_catalog(20, 1.2)
    for seed in range(5):
        assert cache_probc(cat, 20, 4, seed).c.all()


def test_probc_degenerate_popularity():
    cat = make_catalog(5, 1.2)
    cat = type(cat)(5, 1.2, np.array([1.0, 0, 0, 0, 0]))
    c = cache_probc(cat, 1, 3, seed=0).c
    np.testing.assert_array_equal(c[0], [1, 1, 1])
    assert not c[1:].any()


def test_probc_fills_exactly_y_files_even_after_positive_mass_runs_out():
    cat = make_catalog(5, 1.2)
    cat = type(cat)(5, 1.2, np.array([1.0, 0, 0, 0, 0]))
    c = cache_probc(cat, 3, 2, seed=1).c
    np.testing.assert_array_equal(c.sum(axis=0), [3, 3])
    assert np.all(c[0] == 1)


def test_probc_prefers_popular_files():
    cat = make_catalog(100, 1.2)
    hits = np.zeros(100)
    for seed in range(10_000):
        hits += cache_probc(cat, 1, 1, seed).c[:, 0]
    assert hits[0] > hits[49]


@given(st.integers(0, 2**32 - 1), st.integers(0, 30))
def test_probc_column_sums(seed, y):
    c = cache_probc(make_catalog(30, 1.2), y, 4, seed).c
    assert set(np.unique(c)) <= {0, 1}
    np.testing.assert_array_equal(c.sum(axis=0), y)


def test_cache_size_range_checked():
    cat = make_catalog(10, 1.2)
    with pytest.raises(ValueError):
        cache_mpc(cat, 11, 2)
    with pytest.raises(ValueError):
        cache_probc(cat, -1, 2, 0)


# ---- scenario bundle

def test_scenario_json_roundtrip():
    sc = build_scenario(ScenarioConfig(), seed=17)
    back = Scenario.from_json(sc.to_json())
    np.testing.assert_array_equal(back.H, sc.H)
    np.testing.assert_array_equal(back.cache.c, sc.cache.c)
    assert back.grouping.members == sc.grouping.members
    np.testing.assert_array_equal(back.power.P_A_bs, sc.power.P_A_bs)
    assert back.seed == 17
    assert back.to_json() == sc.to_json()


def test_scenario_defaults_and_relative_power_schedule():
    sc = build_scenario(ScenarioConfig(), seed=0)
    assert (sc.n_bs, sc.antennas, sc.n_users) == (7, 2, 15)
    np.testing.assert_allclose(sc.power.relative_power, 5.6 + np.arange(7), rtol=1e-12)
    np.testing.assert_allclose(sc.power.P_S_bs, 4.3)
    np.testing.assert_allclose(sc.power.P_S_bh, 0.75)
    # -172 dBm/Hz over 10 MHz
    assert sc.noise_power[0] == pytest.approx(10 ** (-17.2 - 3) * 1e7, rel=1e-12)


def test_scenario_is_deterministic_per_seed():
    a = build_scenario(ScenarioConfig(cache_strategy="probc"), seed=5)
    b = build_scenario(ScenarioConfig(cache_strategy="probc"), seed=5)
    assert a.to_json() == b.to_json()


def test_unknown_cache_strategy():
    with pytest.raises(ValueError):
        build_scenario(ScenarioConfig(cache_strategy="lru"), seed=0)

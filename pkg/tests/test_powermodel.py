import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cachebeam.netgen import CacheMatrix, PowerParams, ScenarioConfig, build_scenario
from cachebeam.powermodel import (LayeredBeamformer, PowerBreakdown, backhaul_assignment,
                                  backhaul_load, backhaul_power, bs_power, bs_power_of,
                                  check_constraints, group_rate, network_power, sinr_per_user,
                                  support_sets)

from conftest import tiny_config

PICO = PowerParams.uniform(1)


def _random_blocks(rng, shape, scale=0.3):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# ---- published power model constants

def test_sleeping_pico_bs():
    assert bs_power(0.0, 0, PICO, active=False) == 4.3


def test_active_pico_bs_linear_model():
    assert bs_power(0.5, 0, PICO, active=True) == pytest.approx(6.8 + 4 * 0.5, abs=1e-12)
    assert bs_power(0.0, 0, PICO, active=True) == 6.8


def test_backhaul_sleep_power():
    assert backhaul_power(0.0, 0, PICO) == 0.75


def test_backhaul_at_full_load():
    assert backhaul_power(500e6, 0, PICO) == pytest.approx(53.85, abs=1e-12)
    assert backhaul_power(10e6, 0, PICO) == pytest.approx(4.85, abs=1e-12)


def test_backhaul_overload_rejected():
    with pytest.raises(ValueError):
        backhaul_power(500e6 + 1, 0, PICO)


def test_relative_power_of_the_default_constants():
    assert PICO.relative_power[0] == pytest.approx((6.8 - 4.3) + (3.85 - 0.75), abs=1e-12)


@given(st.floats(0, 1), st.floats(0, 1))
def test_power_models_nondecreasing(a, b):
    lo, hi = sorted((a, b))
    assert bs_power(lo, 0, PICO, True) <= bs_power(hi, 0, PICO, True)
    assert backhaul_power(lo * 4e8 + 1, 0, PICO) <= backhaul_power(hi * 4e8 + 1, 0, PICO)


def test_power_params_validation():
    with pytest.raises(ValueError):
        PowerParams.uniform(2, P_A_bs=4.0, P_S_bs=4.3)
    with pytest.raises(ValueError):
        PowerParams.uniform(2, C_bh=0.0)


# ---- rates

def test_group_rate_examples():
    assert group_rate(0.0, 10e6) == 0.0
    assert group_rate(3.0, 10e6) == pytest.approx(20e6, rel=1e-15)
    g = 10 ** 0.5
    assert group_rate(g, 10e6) == pytest.approx(1e7 * math.log(1 + 3.1622776601683795, 2),
                                                rel=1e-12)
    with pytest.raises(ValueError):
        group_rate(-1.0, 10e6)


# ---- SINR

def _sinr_by_loops(blocks, H, ug, noise):
    n_u, n_b, L = H.shape
    out = []
    for k in range(n_u):
        gains = []
        for m in range(blocks.shape[1]):
            s = 0j
            for j in range(n_b):
                for a in range(L):
                    s += np.conj(H[k, j, a]) * blocks[j, m, a]
            gains.append(abs(s) ** 2)
        own = gains[ug[k]]
        out.append(own / (sum(gains) - own + noise[k]))
    return np.array(out)


def test_sinr_matches_loop_evaluation(rng):
    sc = build_scenario(ScenarioConfig(), seed=2)
    v = LayeredBeamformer(_random_blocks(rng, (sc.n_bs, sc.n_groups, sc.antennas)))
    got = sinr_per_user(v, sc.H, sc.user_group, sc.noise_power)
    want = _sinr_by_loops(v.blocks, sc.H, sc.user_group, sc.noise_power)
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_single_group_sinr_is_snr(rng):
    H = _random_blocks(rng, (3, 2, 2), 1.0)
    blocks = _random_blocks(rng, (2, 1, 2))
    v = LayeredBeamformer(blocks)
    noise = np.full(3, 0.1)
    want = np.abs(np.einsum("kja,ja->k", H.conj(), blocks[:, 0])) ** 2 / 0.1
    np.testing.assert_allclose(sinr_per_user(v, H, np.zeros(3, int), noise), want, rtol=1e-12)


def test_zero_beamformer_has_zero_sinr(rng):
    H = _random_blocks(rng, (3, 2, 2), 1.0)
    v = LayeredBeamformer(np.zeros((2, 2, 2), complex))
    np.testing.assert_array_equal(sinr_per_user(v, H, np.array([0, 1, 1]), np.ones(3)), 0.0)


# ---- supports and backhaul

def test_support_sets_examples():
    v = LayeredBeamformer(np.zeros((3, 2, 2), complex))
    assert support_sets(v) == (set(), set())
    blocks = np.zeros((3, 2, 2), complex)
    blocks[2, 1, 0] = 0.5
    v = LayeredBeamformer(blocks)
    assert support_sets(v) == ({2}, {(2, 1)})


def test_backhaul_assignment_examples():
    blocks = np.zeros((2, 2, 1), complex)
    blocks[0, 0, 0] = blocks[0, 1, 0] = 1.0
    v = LayeredBeamformer(blocks)
    uncached = np.array([[0.0, 1.0], [1.0, 1.0]])
    # active+cached -> 0, active+uncached -> 1, inactive -> 0 regardless of cache
    np.testing.assert_array_equal(backhaul_assignment(v, uncached), [[0, 1], [0, 0]])


def test_backhaul_load_examples():
    rates = np.array([20e6, 20e6])
    np.testing.assert_array_equal(backhaul_load(np.zeros((2, 2)), rates), [0.0, 0.0])
    np.testing.assert_array_equal(backhaul_load([[1, 0], [0, 0]], rates), [20e6, 0.0])
    load = backhaul_load([[1, 1], [0, 0]], rates)
    assert load[0] == 40e6 and load[0] > 30e6


def _nested_cases():
    shapes = st.tuples(st.integers(1, 4), st.integers(1, 3), st.integers(1, 2))
    return shapes.flatmap(lambda s: st.tuples(
        arrays(float, s, elements=st.floats(-1, 1)),
        arrays(float, s, elements=st.floats(-1, 1)),
        arrays(np.int8, (s[0], s[1]), elements=st.integers(0, 1)),
        arrays(np.int8, (s[0], s[1]), elements=st.integers(0, 1))))


@given(_nested_cases())
def test_support_nesting_l0_bound_and_cache_monotonicity(case):
    re, im, zero, cached = case
    blocks = (re + 1j * im) * (1 - zero)[:, :, None] * np.where(np.abs(re) < 0.5, 1e-6, 1)
    v = LayeredBeamformer(blocks)
    bs, blk = support_sets(v)
    assert all(j in bs for j, _ in blk)
    uncached = 1.0 - cached
    n = backhaul_assignment(v, uncached)
    assert n.sum() <= len(blk)
    # both forms of the backhaul indicator agree
    bs_mask, blk_mask = v.active_mask()
    raw_blk = v.block_norms() > v.eps_support
    np.testing.assert_array_equal(n, (raw_blk & bs_mask[:, None] & (uncached > 0)).astype(int))
    np.testing.assert_array_equal(n, (raw_blk & (uncached > 0)).astype(int))
    # caching more never adds backhaul traffic
    more = np.maximum(cached, 1 - zero)
    rates = np.full(blocks.shape[1], 1e7)
    assert np.all(backhaul_load(backhaul_assignment(v, 1.0 - more), rates)
                  <= backhaul_load(n, rates))


# ---- network power and constraint checks

def test_network_power_zero_beamformer(tiny_scenario):
    b = network_power(LayeredBeamformer.zeros(tiny_scenario), tiny_scenario)
    assert b.p == 0.0
    assert b.p_tilde == pytest.approx(float(np.sum(tiny_scenario.power.sleep_power)))


def test_network_power_single_active_bs_all_cached():
    sc = build_scenario(tiny_config(cache_size=2), seed=0)
    assert not sc.uncached.any()
    blocks = np.zeros((sc.n_bs, sc.n_groups, sc.antennas), complex)
    blocks[0, 0, 0] = math.sqrt(0.5)
    b = network_power(LayeredBeamformer(blocks, sc.eps_support), sc)
    assert b.p == pytest.approx(2.0 + sc.power.relative_power[0], abs=1e-12)
    assert b.backhaul_traffic == 0.0 and b.n_active_bs == 1


@given(st.integers(0, 10_000), st.floats(0.0, 2.0))
def test_sleep_offset_is_constant(seed, scale):
    sc = build_scenario(tiny_config(n_bs=3, n_users=4), seed=1)
    rng = np.random.default_rng(seed)
    blocks = _random_blocks(rng, (sc.n_bs, sc.n_groups, sc.antennas), scale)
    blocks[rng.random(blocks.shape[:2]) < 0.4] = 0
    b = network_power(LayeredBeamformer(blocks, sc.eps_support), sc)
    assert b.p_tilde - b.p == pytest.approx(float(np.sum(sc.power.sleep_power)), abs=1e-9)
    assert min(b.transmit, b.backhaul_traffic, b.relative, b.static_sleep) >= 0
    assert b.p == pytest.approx(b.transmit + b.backhaul_traffic + b.relative, abs=1e-12)


def test_bs_power_of_uses_support_threshold(tiny_scenario):
    blocks = np.zeros((2, tiny_scenario.n_groups, 2), complex)
    blocks[1, 0, 0] = 1e-6
    v = LayeredBeamformer(blocks, tiny_scenario.eps_support)
    assert bs_power_of(v, 1, tiny_scenario.power) == 4.3


def test_check_constraints_zero_beamformer_fails_qos(tiny_scenario):
    rep = check_constraints(LayeredBeamformer.zeros(tiny_scenario), tiny_scenario)
    assert not rep.qos_ok and rep.power_ok and rep.backhaul_ok
    assert rep.margins["power_dB"] == np.inf


def test_check_constraints_power_cap(tiny_scenario):
    blocks = np.zeros((2, tiny_scenario.n_groups, 2), complex)
    blocks[0, 0, :] = [1.0, 0.5]      # 1.25 W on BS 0
    rep = check_constraints(LayeredBeamformer(blocks, tiny_scenario.eps_support), tiny_scenario)
    assert not rep.power_ok
    assert rep.margins["power_dB"] < 0


def test_check_constraints_backhaul_capacity(tiny_scenario):
    small = tiny_scenario.with_power(PowerParams.uniform(2, C_bh=1e6))
    blocks = np.zeros((2, small.n_groups, 2), complex)
    blocks[0, 0, 0] = 0.1
    rep = check_constraints(LayeredBeamformer(blocks, small.eps_support), small)
    assert not rep.backhaul_ok


def test_breakdown_csv_row_schema():
    b = PowerBreakdown(1.0, 2.0, 3.0, 4.0, 6.0, 10.0, 1, 1)
    row = b.csv_row(0, "lgsbf", 5.0, 10, 12.5)
    assert tuple(row) == ("trial_id", "algorithm", "gamma_dB", "cache_size", "p", "p_tilde",
                          "transmit_W", "backhaul_W", "relative_W", "n_active_bs",
                          "n_backhaul_assignments", "solve_ms")


def test_beamformer_rejects_nonfinite():
    with pytest.raises(ValueError):
        LayeredBeamformer(np.full((1, 1, 1), np.nan + 0j))

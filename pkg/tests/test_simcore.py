import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marlpower.simcore import (PF, CBAR_FLOOR, Network, SimConfig, log_avg_objective, neighbor_sets,
                               objective, pf_update, sinr, spectral_efficiency)
from conftest import random_gains

CAP_SE = 9.967226258835993  # log2(1 + 10**3)


def direct_sinr(g, p, s2):
    n = len(p)
    out = []
    for i in range(n):
        interf = 0.0
        for j in range(n):
            if j != i:
                interf += g[j][i] * p[j]
        out.append(g[i][i] * p[i] / (interf + s2))
    return np.array(out)


def test_sinr_single_link(cfg):
    g = np.array([[1e-12]])
    p = np.array([cfg.P_max])
    assert sinr(g, p, cfg.sigma2)[0] == pytest.approx(1e-12 * cfg.P_max / cfg.sigma2, rel=1e-14)


def test_sinr_silent(rng):
    g = random_gains(3, rng)
    p = np.array([0.0, 1.0, 1.0])
    assert sinr(g, p, 1e-13)[0] == 0.0
    assert sinr(g, p, 1e-13, i=0) == 0.0


def test_sinr_matches_direct_summation(rng):
    for _ in range(20):
        g = random_gains(3, rng)
        p = rng.uniform(0, 1, 3)
        oracle = direct_sinr(g.tolist(), p.tolist(), 1e-13)
        assert np.allclose(sinr(g, p, 1e-13), oracle, rtol=1e-12, atol=0)
        assert sinr(g, p, 1e-13, i=2) == pytest.approx(oracle[2], rel=1e-12)


def test_spectral_efficiency_examples():
    assert spectral_efficiency(0.0) == 0.0
    assert spectral_efficiency(1e4) == pytest.approx(CAP_SE, abs=1e-12)
    assert spectral_efficiency(1.0) == 1.0


@given(st.floats(min_value=0, max_value=1e12, allow_nan=False))
def test_cap_bounds_efficiency(gamma):
    assert spectral_efficiency(gamma) <= CAP_SE + 1e-12


def test_pf_update_examples():
    cbar, w = pf_update(np.array([5.0]), np.array([2.0]), 1.0)
    assert cbar[0] == 2.0 and w[0] == 0.5
    cbar, w = pf_update(np.array([1.0]), np.array([1.0]), 0.01)
    assert cbar[0] == pytest.approx(1.0) and w[0] == pytest.approx(1.0)
    cbar, w = pf_update(np.array([2.0]), np.array([0.0]), 0.01)
    assert cbar[0] == pytest.approx(1.98) and w[0] == pytest.approx(0.50505, abs=1e-5)


def test_pf_update_zero_history_clamped():
    cbar, w = pf_update(np.array([0.0]), np.array([0.0]), 0.5)
    assert cbar[0] == 0.0 and w[0] == 1 / CBAR_FLOOR
    with pytest.raises(ValueError):
        pf_update(np.ones(1), np.ones(1), 0.0)


def test_pf_fixed_point_geometric():
    cbar = np.array([4.0])
    c = np.array([1.0])
    beta = 0.01
    for k in range(1, 200):
        cbar, _ = pf_update(cbar, c, beta)
        assert cbar[0] - 1.0 == pytest.approx(3.0 * (1 - beta) ** k, rel=1e-9)


def test_neighbor_threshold_strict():
    s2 = 1.0
    g = np.array([[1.0, 6.0], [4.0, 1.0]])
    p = np.array([1.0, 1.0])
    interferers, interfered = neighbor_sets(g, p, 5.0, s2)
    assert list(interferers[1]) == [0]  # 6 s2 > 5 s2
    assert list(interferers[0]) == []   # 4 s2 excluded
    assert list(interfered[0]) == [1]
    I, O = neighbor_sets(g, np.zeros(2), 5.0, s2)
    assert all(len(x) == 0 for x in I + O)


def test_neighbor_duality_and_no_self(rng):
    for _ in range(20):
        g = random_gains(8, rng)
        p = rng.uniform(0, 1, 8)
        I, O = neighbor_sets(g, p, 5.0, 1e-12)
        for i in range(8):
            assert i not in I[i] and i not in O[i]
            for j in I[i]:
                assert i in O[j]
            for k in O[i]:
                assert i in I[k]


def test_objective_examples(rng):
    c = rng.uniform(0, 5, 3)
    assert objective(np.ones(3), c) == pytest.approx(c.sum())
    assert objective(np.zeros(3), c) == 0.0
    w = rng.uniform(0, 2, 3)
    assert objective(w, c) == pytest.approx(sum(a * b for a, b in zip(w, c)))
    with pytest.raises(ValueError):
        objective(np.ones(2), c)


def test_log_avg_objective():
    assert log_avg_objective([1.0], 1e7) == pytest.approx(16.11809565095832)
    assert log_avg_objective([0.7] * 5, 1e7) == pytest.approx(5 * math.log(0.7e7))
    base = log_avg_objective([1.0, 2.0], 1e7)
    assert log_avg_objective([2.0, 2.0], 1e7) - base == pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        log_avg_objective([1.0, 0.0])


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(eta=0)
    with pytest.raises(ValueError):
        SimConfig(beta=1.5)
    with pytest.raises(ValueError):
        SimConfig(r=5)
    with pytest.raises(ValueError):
        SimConfig(mode="greedy")
    cfg = SimConfig()
    assert 10 * math.log10(cfg.P_max * cfg.bandwidth * 1e3) == pytest.approx(38.0)
    assert 10 * math.log10(cfg.sigma2 * cfg.bandwidth * 1e3) == pytest.approx(-114.0)


def test_silent_network_pf():
    cfg = SimConfig(n_cells=3, mode=PF)
    net = Network(cfg)
    s0 = net.reset()
    st1, rec1 = net.step(np.zeros(3))
    st2, rec2 = net.step(np.zeros(3))
    assert np.all(rec1.C == 0) and np.all(rec2.C == 0)
    assert not st1.I_now.any() and not st2.I_now.any()
    assert np.allclose(st2.Cbar, 0.99**2 * s0.Cbar)
    assert np.all(st2.w_now > st1.w_now)


def test_frozen_channel_constant_rate():
    cfg = SimConfig(n_cells=4, f_d=0.0)
    net = Network(cfg)
    net.reset()
    p = np.array([1.0, 0.5, 0.0, 0.3]) * cfg.P_max
    rates = [net.step(p)[1].C for _ in range(5)]
    for c in rates[1:]:
        assert np.allclose(c, rates[0], rtol=1e-13)


def test_same_channel_regardless_of_powers():
    cfg = SimConfig(n_cells=3, seed=4)
    a, b = Network(cfg), Network(cfg)
    sa, sb = a.reset(), b.reset()
    for _ in range(5):
        sa, _ = a.step(np.zeros(3))
        sb, _ = b.step(np.full(3, cfg.P_max))
    assert np.array_equal(sa.g_now, sb.g_now)


def test_reset_fast_forward_matches_continuous_run():
    cfg = SimConfig(n_cells=3, seed=2)
    a = Network(cfg)
    st = a.reset()
    for _ in range(9):
        st, _ = a.step(np.full(3, cfg.P_max))
    b = Network(cfg)
    sb = b.reset(start_slot=9)
    assert st.t == sb.t == 10
    assert np.array_equal(st.g_now, sb.g_now)


def test_replay_oracle_scripted_trace():
    """Every cached register equals a recomputation from the logged history."""
    cfg = SimConfig(n_cells=3, seed=11, mode=PF, beta=0.1)
    net = Network(cfg)
    s2 = cfg.sigma2
    st = net.reset()
    P = cfg.P_max
    script = [[P, P, 0], [0, P / 2, P], [0, 0, P], [P, 0, 0], [P / 3, P, P], [0, 0, 0], [P, P, P]]
    # history indexed by slot: slot 0 is the full-power bootstrap
    g_hist = {0: st.g_prev, 1: st.g_now}
    p_hist = {0: [P, P, P]}
    c_hist = {0: st.C_prev}
    w_hist = {0: st.w_prev, 1: st.w_now}
    cbar = {0: st.Cbar}
    states = {1: st}
    for k, p in enumerate(script, start=1):
        st, rec = net.step(np.array(p))
        p_hist[k] = p
        c_hist[k] = rec.C
        cbar[k] = rec.Cbar
        g_hist[k + 1] = st.g_now
        w_hist[k + 1] = st.w_now
        states[k + 1] = st

    def interf(g, p, i):
        return sum(g[j][i] * p[j] for j in range(3) if j != i) + s2

    for t, sv in states.items():
        if t < 3:
            continue
        g_t, g_1 = g_hist[t].tolist(), g_hist[t - 1].tolist()
        p_1, p_2 = p_hist[t - 1], p_hist[t - 2]
        assert np.array_equal(sv.p_prev, p_1) and np.array_equal(sv.p_prev2, p_2)
        assert np.array_equal(sv.g_prev, g_hist[t - 1])
        for i in range(3):
            assert sv.interf_noise_now[i] == pytest.approx(interf(g_t, p_1, i), rel=1e-12)
            assert sv.interf_noise_prev[i] == pytest.approx(interf(g_1, p_2, i), rel=1e-12)
            assert sv.interf_noise_last[i] == pytest.approx(interf(g_1, p_1, i), rel=1e-12)
            gam = g_1[i][i] * p_1[i] / interf(g_1, p_1, i)
            assert sv.C_prev[i] == pytest.approx(math.log2(1 + min(gam, 1e3)), rel=1e-12, abs=1e-15)
            for j in range(3):
                heard = j != i and g_1[j][i] * p_1[j] > cfg.eta * s2
                assert sv.I_now[j, i] == heard
                heard_before = j != i and g_hist[t - 2][j, i] * p_2[j] > cfg.eta * s2
                assert sv.I_prev[j, i] == heard_before
        assert np.allclose(sv.Cbar, 0.1 * c_hist[t - 1] + 0.9 * cbar[t - 2], rtol=1e-12)
        assert np.allclose(sv.w_now, 1 / sv.Cbar)
        assert np.array_equal(sv.w_prev, w_hist[t - 1])
        for i in range(3):
            active = [s for s in range(t) if p_hist[s][i] > 0]
            assert sv.t_last_active[i] == active[-1]
            s_last = active[-1]
            assert np.allclose(sv.last_active_rx[i], g_hist[s_last][i] * p_hist[s_last][i], rtol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10**6), st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_duality_every_slot(seed, frac):
    cfg = SimConfig(n_cells=4, seed=seed)
    net = Network(cfg)
    sv = net.reset()
    for _ in range(3):
        sv, _ = net.step(np.array(frac) * cfg.P_max)
        for i in range(4):
            for j in sv.interferers(i):
                assert i in sv.interfered(j)
            assert i not in sv.interferers(i)


def test_step_rejects_wrong_length():
    net = Network(SimConfig(n_cells=3))
    net.reset()
    with pytest.raises(ValueError):
        net.step(np.zeros(4))

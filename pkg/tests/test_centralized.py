import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coordbeam.centralized import (
    BalancingConfig,
    SolveOutcome,
    pareto_improve,
    solve_max_min,
    solve_max_min_uplink,
    solve_sum_power_feasibility,
    two_step,
    verify_pareto_2user,
    zf_direction,
)
from coordbeam.errors import NonConvergence, WrongDimensions
from coordbeam.system_model import ChannelSet, downlink_sinr, gain_matrix, per_bs_power, user_rate
from helpers import crandn, drop_instance, iid_instance, socp_max_min


def test_feasibility_s2_gamma_one(s2):
    ok, f, p = solve_sum_power_feasibility(s2, 1.0)
    assert ok
    np.testing.assert_allclose(p, [4 / 3, 4 / 3], rtol=1e-9)
    assert p.sum() == pytest.approx(8 / 3)


def test_feasibility_s2_gamma_three_infeasible(s2):
    ok, _, p = solve_sum_power_feasibility(s2, 3.0)
    assert not ok


def test_feasibility_single_link():
    h = np.array([[[1.0, 1j, 0.5]]])
    ch = ChannelSet(h, 2.0, [0], 5.0)
    snr_gain = np.sum(np.abs(h) ** 2) / 2.0
    ok, f, p = solve_sum_power_feasibility(ch, 0.7 * 5.0 * snr_gain)
    assert ok
    assert p[0] == pytest.approx(0.7 * 5.0, rel=1e-9)
    np.testing.assert_allclose(abs(np.vdot(f[0], h[0, 0])), np.linalg.norm(h[0, 0]), rtol=1e-12)


def test_feasibility_agrees_with_max_min(rng):
    ch = iid_instance(rng, 3, 3, 3, snr_db=10)
    g = solve_max_min(ch).gamma
    assert solve_sum_power_feasibility(ch, 0.97 * g)[0]
    assert not solve_sum_power_feasibility(ch, 1.03 * g)[0]


def test_max_min_s2(s2):
    out = solve_max_min(s2)
    assert out.gamma == pytest.approx(2.0, rel=1e-6)
    np.testing.assert_allclose(out.powers, [4, 4], rtol=1e-6)
    assert out.active_bs.all()


def test_max_min_single_user():
    h = np.array([[[3.0, 4.0]]])
    ch = ChannelSet(h, 0.5, [0], 2.0)
    out = solve_max_min(ch)
    assert out.gamma == pytest.approx(2.0 * 25 / 0.5, rel=1e-9)
    assert out.powers[0] == pytest.approx(2.0)
    np.testing.assert_allclose(out.beamformers[0], [0.6, 0.8], atol=1e-9)


def test_max_min_decoupled_cells():
    h = np.zeros((2, 2, 2), dtype=complex)
    h[0, 0] = [1, 0]
    h[1, 1] = [0, 2]
    ch = ChannelSet(h, 1.0, [0, 1], 3.0)
    out = solve_max_min(ch)
    # the worse user's interference-free SNR
    assert out.gamma == pytest.approx(3.0 * 1, rel=1e-6)
    rates = two_step(ch).rates(ch)
    np.testing.assert_allclose(rates, np.log2(1 + 3.0 * np.array([1, 4])), rtol=1e-6)


def test_max_min_balanced_and_feasible(rng):
    for M, K, B in [(4, 3, 3), (2, 4, 2), (3, 2, 2)]:
        ch = iid_instance(rng, M, K, B, snr_db=10)
        out = solve_max_min(ch)
        sinr = downlink_sinr(ch, out.beamformers, out.powers)
        np.testing.assert_allclose(sinr, out.gamma, rtol=1e-6)
        assert np.all(per_bs_power(ch, out.powers) <= ch.p_max * (1 + 1e-9))
        assert out.active_bs.any()
        assert out.info["gamma_upper"] >= out.gamma


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.filterwarnings("ignore::UserWarning")
def test_max_min_matches_socp_oracle(seed):
    pytest.importorskip("cvxpy")
    rng = np.random.default_rng(100 + seed)
    M, K, B = [(4, 3, 3), (2, 2, 2), (3, 4, 2), (4, 2, 2)][seed]
    ch = iid_instance(rng, M, K, B, snr_db=rng.uniform(0, 20))
    ref = socp_max_min(ch)
    # the conic solver resolves the feasibility boundary to about 1e-4
    assert solve_max_min(ch).gamma == pytest.approx(ref, rel=5e-4)


def test_weighted_max_min(rng):
    ch = iid_instance(rng, 3, 3, 3, snr_db=10)
    rho = np.array([1.0, 2.0, 0.5])
    out = solve_max_min(ch, BalancingConfig(weights=rho))
    np.testing.assert_allclose(downlink_sinr(ch, out.beamformers, out.powers) / rho, out.gamma, rtol=1e-6)


def test_max_min_nonconvergence_reported(rng):
    ch = iid_instance(rng, 2, 3, 3, snr_db=20, cross=0.9)
    with pytest.raises(NonConvergence):
        solve_max_min(ch, BalancingConfig(max_outer=1, tol=1e-14))


def test_uplink_bisection_single_user():
    ch = ChannelSet(np.array([[[1.0, 1.0]]]), 1.0, [0], 2.0)
    out = solve_max_min_uplink(ch)
    assert out.gamma == pytest.approx(4.0, rel=1e-6)
    assert out.direction == "uplink"


# ---------------------------------------------------------------- step 2


def test_pareto_noop_at_full_power(s2):
    step1 = solve_max_min(s2)
    out = pareto_improve(s2, step1)
    np.testing.assert_array_equal(out.powers, step1.powers)
    np.testing.assert_array_equal(out.beamformers, step1.beamformers)


def test_pareto_constructed_example():
    h = np.zeros((2, 2, 2), dtype=complex)
    h[0, 0] = [1, 1]  # h_11
    h[1, 0] = [0, 1]  # h_21, the only other channel seen from BS 1
    h[1, 1] = [1, 0]
    h[0, 1] = [0.3, 0.2]
    ch = ChannelSet(h, 1.0, [0, 1], 4.0)
    np.testing.assert_allclose(zf_direction(ch, 0), [1, 0])
    f = np.array([[1, 0], [1, 0]], dtype=complex)
    p = np.array([1.0, 4.0])
    out = pareto_improve(ch, SolveOutcome(gamma=0.0, beamformers=f, powers=p))
    np.testing.assert_allclose(out.beamformers[0], [1, 0], atol=1e-12)
    assert out.powers[0] == pytest.approx(4.0)
    assert abs(np.vdot(h[1, 0], out.beamformers[0])) ** 2 == pytest.approx(0.0, abs=1e-24)
    signal = out.powers[0] * abs(np.vdot(h[0, 0], out.beamformers[0])) ** 2
    assert signal == pytest.approx(4.0)
    assert out.info["pareto_updates"] == [0]


def test_pareto_scalar_skips():
    h = np.array([[[1.0], [0.5]], [[0.5], [1.0]]])
    ch = ChannelSet(h, 1.0, [0, 1], 4.0)
    out = pareto_improve(ch, SolveOutcome(gamma=0.0, beamformers=np.ones((2, 1)), powers=np.array([1.0, 4.0])))
    np.testing.assert_array_equal(out.powers, [1.0, 4.0])
    assert out.info["pareto_skipped"] and out.info["pareto_skipped"][0][0] == 0


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_step_two_never_lowers_worst_rate(seed):
    rng = np.random.default_rng(seed)
    M, K, B = [(4, 3, 3), (4, 2, 2), (2, 2, 2), (3, 4, 2)][seed % 4]
    ch = iid_instance(rng, M, K, B, snr_db=rng.uniform(0, 20))
    step1 = solve_max_min(ch)
    out = pareto_improve(ch, step1)
    r1 = user_rate(downlink_sinr(ch, step1.beamformers, step1.powers))
    r2 = out.rates(ch)
    assert r2.min() >= r1.min() - 1e-8
    assert np.all(per_bs_power(ch, out.powers) <= ch.p_max * (1 + 1e-9))
    np.testing.assert_allclose(np.linalg.norm(out.beamformers, axis=1), 1.0, rtol=1e-12)


def test_pareto_leaves_interference_unchanged(rng):
    for _ in range(20):
        ch = iid_instance(rng, 4, 3, 3, snr_db=10)
        step1 = solve_max_min(ch)
        out = pareto_improve(ch, step1)
        for k in out.info["pareto_updates"]:
            G0 = gain_matrix(ch, step1.beamformers)
            G1 = gain_matrix(ch, out.beamformers)
            leak0 = np.delete(G0[:, k], k) * step1.powers[k]
            leak1 = np.delete(G1[:, k], k) * out.powers[k]
            np.testing.assert_allclose(leak1, leak0, rtol=1e-8, atol=1e-14)


def test_verify_pareto_boundary_and_halved(rng):
    ch = drop_instance(3, 4, 2, 2, 15.0)
    out = two_step(ch)
    assert verify_pareto_2user(ch, out, resolution=100) <= 0.05
    halved = SolveOutcome(gamma=0, beamformers=out.beamformers, powers=out.powers / 8)
    assert verify_pareto_2user(ch, halved, resolution=60) > 0


def test_verify_pareto_dimensions(rng):
    with pytest.raises(WrongDimensions):
        verify_pareto_2user(iid_instance(rng, 2, 3, 3), None)


@pytest.mark.parametrize("seed", range(6))
def test_feasibility_brackets_max_min_level(seed):
    rng = np.random.default_rng(seed)
    ch = iid_instance(rng, 3, 3, 3, snr_db=rng.uniform(0, 20))
    g = solve_max_min(ch).gamma
    ok, f, p = solve_sum_power_feasibility(ch, 0.995 * g)
    assert ok
    np.testing.assert_allclose(downlink_sinr(ch, f, p), 0.995 * g, rtol=1e-6)
    assert np.all(per_bs_power(ch, p) <= ch.p_max * (1 + 1e-8))
    assert not solve_sum_power_feasibility(ch, 1.005 * g)[0]

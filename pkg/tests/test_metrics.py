"""SINR / rate / power / SLNR metric tests against scalar oracles."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference
from cbsim.config import NetworkConfig
from cbsim.errors import UsageError
from cbsim.metrics import (bs_power, empty_beams, per_user_rate_samples,
                           power_feasible, rate_report, sinr, slnr,
                           weighted_sum_rate)
from cbsim.network import ChannelState


def synthetic_channels(config, seed=0):
    rng = np.random.default_rng(seed)
    shape = (config.M, config.n_users, config.N, config.Nt)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return ChannelState(normalized=h, n_coordinated=config.M)


def single_link_state(h_vec):
    config = NetworkConfig(M=1, N=1, K=1, Nt=len(h_vec), weights=np.ones((1, 1, 1)))
    h = np.asarray(h_vec, dtype=complex).reshape(1, 1, 1, -1)
    return config, ChannelState(normalized=h, n_coordinated=1)


def test_sinr_single_beam_no_interference():
    config, state = single_link_state([1.0, 0.0])
    beams = empty_beams(config)
    beams[0, 0, 0] = [2.0, 0.0]
    assert sinr(state, beams, config, 0, 0, 0) == pytest.approx(4.0)


def test_sinr_zero_beam():
    config, state = single_link_state([1.0, 0.5])
    beams = empty_beams(config)
    assert sinr(state, beams, config, 0, 0, 0) == 0.0


def test_sinr_two_beam_hand_instance():
    config = NetworkConfig(M=2, N=1, K=1, Nt=2)
    h = np.zeros((2, 2, 1, 2), dtype=complex)
    h[0, 0, 0] = [1.0 + 1.0j, 0.5]         # BS0 -> user0
    h[1, 0, 0] = [0.3 - 0.2j, 0.4j]        # BS1 -> user0 (interference path)
    h[0, 1, 0] = [0.1, 0.2]
    h[1, 1, 0] = [1.0, -1.0j]
    state = ChannelState(normalized=h, n_coordinated=2)
    beams = empty_beams(config)
    beams[0, 0, 0] = [0.6, -0.8j]
    beams[1, 0, 0] = [0.5 + 0.5j, 0.1]
    got = sinr(state, beams, config, 0, 0, 0)
    want = reference.sinr_scalar(state, beams, config, 0, 0, 0)
    assert got == pytest.approx(want, rel=1e-12)


def test_sinr_inactive_triple_is_usage_error():
    config = NetworkConfig(M=1, N=2, K=1, Nt=2)
    config.assignment[0, 0, 1] = False
    state = synthetic_channels(config)
    beams = empty_beams(config)
    with pytest.raises(UsageError):
        sinr(state, beams, config, 0, 0, 1)


def test_wsr_zero_beams():
    config = NetworkConfig(M=2, N=2, K=2, Nt=2)
    state = synthetic_channels(config)
    assert weighted_sum_rate(state, empty_beams(config), config) == 0.0


def test_wsr_single_beam_log2():
    config, state = single_link_state([1.0])
    beams = empty_beams(config)
    beams[0, 0, 0] = [np.sqrt(3.0)]        # SINR = 3, w = 1
    assert weighted_sum_rate(state, beams, config) == pytest.approx(2.0)


def test_wsr_matches_scalar_oracle():
    config = NetworkConfig(M=2, N=2, K=2, Nt=2)
    state = synthetic_channels(config, seed=5)
    rng = np.random.default_rng(6)
    beams = (rng.standard_normal((2, 2, 2, 2))
             + 1j * rng.standard_normal((2, 2, 2, 2))) * 0.4
    got = weighted_sum_rate(state, beams, config)
    assert got == pytest.approx(reference.wsr_scalar(state, beams, config), rel=1e-12)


def test_wsr_invariant_to_user_relabel():
    config = NetworkConfig(M=2, N=2, K=3, Nt=2)
    state = synthetic_channels(config, seed=9)
    rng = np.random.default_rng(10)
    beams = (rng.standard_normal((2, 3, 2, 2))
             + 1j * rng.standard_normal((2, 3, 2, 2))) * 0.3
    base = weighted_sum_rate(state, beams, config)
    perm = np.array([2, 0, 1])
    permuted_h = state.normalized.copy()
    for m in range(2):
        block = state.normalized[:, m * 3:(m + 1) * 3]
        permuted_h[:, m * 3:(m + 1) * 3] = block[:, perm]
    state_p = ChannelState(normalized=permuted_h, n_coordinated=2)
    assert weighted_sum_rate(state_p, beams[:, perm], config) == pytest.approx(base)


def test_bs_power_and_feasibility():
    config = NetworkConfig(M=2, N=1, K=1, Nt=2, Pmax=2.0)
    beams = empty_beams(config)
    assert bs_power(beams, 0) == 0.0
    assert power_feasible(beams, config)
    beams[0, 0, 0] = [np.sqrt(2.0), 0.0]   # exactly Pmax
    assert bs_power(beams, 0) == pytest.approx(2.0)
    assert power_feasible(beams, config)
    beams[1, 0, 0] = [np.sqrt(2.2), 0.0]   # 1.1 * Pmax
    assert not power_feasible(beams, config)


def test_slnr_single_user():
    config, state = single_link_state([1.0, 2.0])
    beams = empty_beams(config)
    beams[0, 0, 0] = [1.0, 1.0]
    expected = abs(np.vdot(state.normalized[0, 0, 0], beams[0, 0, 0])) ** 2
    assert slnr(state, beams, config, 0, 0, 0) == pytest.approx(expected)


def test_slnr_orthogonal_beam_has_no_leakage():
    config = NetworkConfig(M=1, N=1, K=2, Nt=2, weights=np.ones((1, 2, 1)))
    h = np.zeros((1, 2, 1, 2), dtype=complex)
    h[0, 0, 0] = [1.0, 0.0]
    h[0, 1, 0] = [0.0, 1.0]
    state = ChannelState(normalized=h, n_coordinated=1)
    beams = empty_beams(config)
    beams[0, 0, 0] = [3.0, 0.0]            # orthogonal to user 1's channel
    assert slnr(state, beams, config, 0, 0, 0) == pytest.approx(9.0)
    assert slnr(state, beams, config, 0, 0, 0) == pytest.approx(
        sinr(state, beams, config, 0, 0, 0))


def test_slnr_matches_scalar_oracle():
    config = NetworkConfig(M=2, N=2, K=2, Nt=3)
    state = synthetic_channels(config, seed=12)
    rng = np.random.default_rng(13)
    beams = (rng.standard_normal((2, 2, 2, 3))
             + 1j * rng.standard_normal((2, 2, 2, 3))) * 0.5
    got = slnr(state, beams, config, 1, 0, 1)
    assert got == pytest.approx(
        reference.slnr_scalar(state, beams, config, 1, 0, 1), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(min_value=0.01, max_value=50.0))
def test_isolated_beam_scaling(alpha):
    config, state = single_link_state([0.8 + 0.1j, -0.3j])
    beams = empty_beams(config)
    beams[0, 0, 0] = [0.5, 0.25 + 0.1j]
    base = abs(np.vdot(state.normalized[0, 0, 0], beams[0, 0, 0])) ** 2
    assert sinr(state, beams * alpha, config, 0, 0, 0) == pytest.approx(
        alpha ** 2 * base, rel=1e-9)


def test_rate_monotone_in_sinr():
    s = np.linspace(0.0, 50.0, 200)
    rates = np.log2(1.0 + s)
    assert np.all(np.diff(rates) > 0)


def test_slnr_bounded_by_desired_power():
    config = NetworkConfig(M=2, N=1, K=2, Nt=2)
    state = synthetic_channels(config, seed=20)
    rng = np.random.default_rng(21)
    beams = (rng.standard_normal((2, 2, 1, 2))
             + 1j * rng.standard_normal((2, 2, 1, 2)))
    for m in range(2):
        for k in range(2):
            cap = abs(np.vdot(state.normalized[m, config.user_id(m, k), 0],
                              beams[m, k, 0])) ** 2
            assert slnr(state, beams, config, m, k, 0) <= cap + 1e-12


def test_per_user_rate_samples_counts():
    config = NetworkConfig(M=2, N=2, K=2, Nt=2)
    state = synthetic_channels(config, seed=30)
    rng = np.random.default_rng(31)
    reports = []
    for _ in range(5):
        beams = (rng.standard_normal((2, 2, 2, 2))
                 + 1j * rng.standard_normal((2, 2, 2, 2))) * 0.3
        reports.append(rate_report(state, beams, config))
    samples = per_user_rate_samples(reports)
    assert samples.shape == (5 * config.M * config.K,)
    assert np.all(np.diff(samples) >= 0)


def test_per_user_rate_samples_trivial():
    config, state = single_link_state([1.0])
    beams = empty_beams(config)
    beams[0, 0, 0] = [np.sqrt(3.0)]
    rep = rate_report(state, beams, config)
    assert per_user_rate_samples([rep]).tolist() == [pytest.approx(2.0)]


def test_rate_report_csv_rows():
    config = NetworkConfig(M=2, N=2, K=2, Nt=2)
    state = synthetic_channels(config, seed=33)
    beams = empty_beams(config)
    rep = rate_report(state, beams, config)
    rows = rep.csv_rows(trial=3, algo="cm")
    assert len(rows) == config.M * config.K * config.N
    assert rows[0][:2] == [3, "cm"]

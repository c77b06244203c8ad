"""Topology, channel and noise model tests."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbsim.config import NetworkConfig
from cbsim.errors import ConfigurationError, InvalidStateError
from cbsim.network import (ChannelState, apply_noise, build_topology,
                           compute_noise, draw_channels, dump_channels_csv,
                           dump_topology_csv, normalize_channels, path_gain,
                           realize_network)


def small_config(**kw):
    defaults = dict(M=3, N=2, K=2, Nt=2)
    defaults.update(kw)
    return NetworkConfig(**defaults)


def test_coordinated_bs_spacing_is_2000m():
    topo = build_topology(NetworkConfig(), seed=0)
    bs = topo.bs_xy[:3]
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.linalg.norm(bs[i] - bs[j]) == pytest.approx(2000.0)


def test_24_uncoordinated_sites_on_surrounding_rings():
    topo = build_topology(NetworkConfig(), seed=1)
    assert topo.bs_xy.shape == (27, 2)
    centroid = topo.bs_xy[:3].mean(axis=0)
    ring = np.linalg.norm(topo.bs_xy[3:] - centroid, axis=1)
    # surrounding sites sit beyond the cluster's own centroid distance
    assert ring.min() > np.linalg.norm(topo.bs_xy[0] - centroid)
    assert len(set(map(tuple, np.round(topo.bs_xy, 3)))) == 27


@pytest.mark.parametrize("seed", [0, 7, 12345])
def test_user_distances_within_annulus(seed):
    config = NetworkConfig()
    topo = build_topology(config, seed)
    for m in range(config.M):
        for k in range(config.K):
            d = np.linalg.norm(topo.user_xy[m, k] - topo.bs_xy[m])
            assert 500.0 <= d <= 1100.0


def test_topology_deterministic():
    a = build_topology(NetworkConfig(), seed=99)
    b = build_topology(NetworkConfig(), seed=99)
    assert np.array_equal(a.bs_xy, b.bs_xy)
    assert np.array_equal(a.user_xy, b.user_xy)


def test_unsupported_cluster_size_rejected():
    with pytest.raises(ConfigurationError):
        build_topology(NetworkConfig(M=4), seed=0)


def test_small_clusters_supported():
    for m in (1, 2):
        topo = build_topology(NetworkConfig(M=m, K=1), seed=0)
        assert topo.bs_xy.shape == (m + 24, 2)


def test_path_gain_reference_distance():
    assert path_gain(200.0) == pytest.approx(1.0)
    # (200/400)^3.5 evaluated by hand
    assert path_gain(400.0) == pytest.approx(0.08838834764831845, rel=1e-12)


def test_shadowing_statistics():
    # ~1e5 links: 27 BSs x 3702 users
    config = NetworkConfig(M=3, K=1234, N=1, Nt=1)
    topo = build_topology(config, seed=3)
    state = draw_channels(topo, config, seed=4)
    shadow_db = 10.0 * np.log10(state.shadow).ravel()
    assert shadow_db.size >= 1e5 - 100
    assert abs(shadow_db.mean()) < 0.3
    assert abs(shadow_db.std() - 8.0) < 0.3


def test_rayleigh_component_statistics():
    config = NetworkConfig(M=3, K=1234, N=1, Nt=1)
    topo = build_topology(config, seed=5)
    state = draw_channels(topo, config, seed=6)
    amp2 = path_gain(topo.user_bs_distances()) * state.shadow
    fading = state.raw[:, :, 0, 0] / np.sqrt(amp2)
    flat = fading.ravel()
    assert abs(flat.mean()) < 3.0 / np.sqrt(flat.size)
    assert abs(np.mean(np.abs(flat) ** 2) - 1.0) < 0.02


def test_channel_draw_deterministic():
    config = small_config()
    topo = build_topology(config, seed=11)
    a = draw_channels(topo, config, seed=22)
    b = draw_channels(topo, config, seed=22)
    assert np.array_equal(a.raw, b.raw)
    assert np.array_equal(a.shadow, b.shadow)


def test_noise_floor_without_interferers():
    config = small_config(gamma_db=20.0)
    topo = build_topology(config, seed=0)
    state = draw_channels(topo, config, seed=1)
    state.shadow[config.M:] = 0.0   # silence the uncoordinated ring
    noise = compute_noise(topo, config, state)
    assert np.allclose(noise, config.sigma2)


def test_noise_single_interferer_contribution():
    # one uncoordinated BS at 200 m with unit shadowing and Pmax = N
    config = small_config(N=2, Pmax=2.0, gamma_db=30.0)
    topo = build_topology(config, seed=0)
    state = draw_channels(topo, config, seed=1)
    state.shadow[config.M:] = 0.0
    state.shadow[config.M, 0] = 1.0
    topo.bs_xy[config.M] = topo.user_xy[0, 0] + np.array([200.0, 0.0])
    noise = compute_noise(topo, config, state)
    assert noise[0, 0] == pytest.approx(config.sigma2 + 1.0)


def test_noise_dominates_thermal_at_high_snr():
    config = small_config(gamma_db=200.0)
    topo = build_topology(config, seed=2)
    state = draw_channels(topo, config, seed=3)
    noise = compute_noise(topo, config, state)
    gains = path_gain(topo.user_bs_distances()[config.M:]) * state.shadow[config.M:]
    interference = gains.sum(axis=0) * config.Pmax / config.N
    assert np.allclose(noise[:, 0], interference, rtol=1e-10)


def test_noise_at_least_thermal():
    config = small_config()
    topo, state = realize_network(config, 8)
    assert np.all(state.noise >= config.sigma2)


def test_normalization_reconstruction_identity():
    config = small_config()
    topo, state = realize_network(config, 13)
    rebuilt = state.normalized * np.sqrt(state.noise)[None, :, :, None]
    assert np.allclose(rebuilt, state.raw[:config.M], rtol=1e-12, atol=0)
    norm_n = np.linalg.norm(state.normalized, axis=-1) ** 2 * state.noise[None]
    norm_raw = np.linalg.norm(state.raw[:config.M], axis=-1) ** 2
    assert np.allclose(norm_n, norm_raw, rtol=1e-12)


def test_unit_noise_leaves_channels_unchanged():
    config = small_config()
    topo = build_topology(config, seed=4)
    state = draw_channels(topo, config, seed=5)
    state.noise = np.ones((config.n_users, config.N))
    normalize_channels(state)
    assert np.array_equal(state.normalized, state.raw[:config.M])


def test_scalar_noise_division():
    state = ChannelState(
        raw=np.array([[[[2.0 + 0j, 0.0, 0.0]]]]),
        shadow=np.ones((1, 1)),
        noise=np.full((1, 1), 4.0),
        n_coordinated=1)
    normalize_channels(state)
    assert np.allclose(state.normalized[0, 0, 0], [1.0, 0.0, 0.0])


def test_nonpositive_noise_rejected():
    config = small_config()
    topo = build_topology(config, seed=4)
    state = draw_channels(topo, config, seed=5)
    state.noise = np.zeros((config.n_users, config.N))
    with pytest.raises(InvalidStateError):
        normalize_channels(state)


def test_normalize_requires_noise():
    config = small_config()
    topo = build_topology(config, seed=4)
    state = draw_channels(topo, config, seed=5)
    with pytest.raises(InvalidStateError):
        normalize_channels(state)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_realization_deterministic(seed):
    config = NetworkConfig(M=2, N=1, K=2, Nt=2)
    _, a = realize_network(config, seed)
    _, b = realize_network(config, seed)
    assert np.array_equal(a.normalized, b.normalized)
    assert np.array_equal(a.noise, b.noise)


def test_apply_noise_shares_raw_draw():
    config = small_config(gamma_db=10.0)
    topo = build_topology(config, seed=6)
    raw = draw_channels(topo, config, seed=7)
    lo = apply_noise(topo, config.with_gamma_db(10.0), raw)
    hi = apply_noise(topo, config.with_gamma_db(40.0), raw)
    assert lo.raw is raw.raw
    assert np.all(hi.noise < lo.noise)


def test_csv_dumps(tmp_path):
    config = small_config()
    topo, state = realize_network(config, 21)
    tpath = tmp_path / "topo.csv"
    cpath = tmp_path / "chan.csv"
    dump_topology_csv(topo, tpath)
    dump_channels_csv(state, cpath)
    tlines = tpath.read_text().splitlines()
    assert tlines[0] == "kind,cell,index,x_m,y_m"
    assert len(tlines) == 1 + 27 + config.M * config.K
    clines = cpath.read_text().splitlines()
    assert clines[0].startswith("m,k,n,re0,im0")
    assert len(clines) == 1 + config.M * config.n_users * config.N

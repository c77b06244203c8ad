"""Cellular topology, fading channels and long-term noise model.

Geometry: a cluster of up to 3 coordinated BSs on a hexagonal grid with
2000 m inter-site distance, surrounded by 24 uncoordinated BSs placed on the
nearest lattice sites around the cluster centroid. Users are dropped
uniformly in angle and uniformly in radius within a [500, 1100] m annulus
around their serving BS.

Channel model per (BS, user, subchannel):

    h_raw = sqrt((200 / d)^3.5 * L) * g,   g ~ CN(0, I_Nt)

with log-normal shadowing 10*log10(L) ~ Normal(0, 8^2) drawn once per
(BS, user) link and shared across subchannels; small-scale fading is drawn
independently per subchannel (flat within a subchannel).

Long-term noise per user aggregates thermal noise and the average power
received from the 24 uncoordinated BSs:

    noise = sigma^2 + sum_out (200 / d)^3.5 * L * Pmax / N

Downstream modules consume noise-normalized channels h = h_raw / sqrt(noise),
so their noise floor is exactly 1.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import NetworkConfig
from .errors import ConfigurationError, DegenerateChannelError, InvalidStateError

INTER_SITE_M = 2000.0
USER_RADIUS_MIN_M = 500.0
USER_RADIUS_MAX_M = 1100.0
N_UNCOORDINATED = 24
PATHLOSS_REF_M = 200.0
PATHLOSS_EXPONENT = 3.5
SHADOWING_STD_DB = 8.0


@dataclass
class Topology:
    """BS and user positions in meters.

    bs_xy: (M + 24, 2); rows 0..M-1 are the coordinated cluster, the rest are
           the uncoordinated interferers ordered by distance from the cluster
           centroid.
    user_xy: (M, K, 2); user (m, k) is served by BS m.
    serving: (M, K) integer map user -> serving BS (== m by construction).
    """
    bs_xy: np.ndarray
    user_xy: np.ndarray
    serving: np.ndarray
    n_coordinated: int

    def user_bs_distances(self) -> np.ndarray:
        """Distance matrix of shape (n_bs, M*K) from every BS to every user."""
        users = self.user_xy.reshape(-1, 2)
        diff = self.bs_xy[:, None, :] - users[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass
class ChannelState:
    """Raw channels, shadowing, long-term noise and normalized channels.

    raw:        (n_bs, M*K, N, Nt) complex, all BSs including uncoordinated
    shadow:     (n_bs, M*K) linear shadowing gains L per link
    noise:      (M*K, N) linear noise power per (user, subchannel)
    normalized: (M, M*K, N, Nt) complex, coordinated BSs only,
                normalized = raw / sqrt(noise)
    """
    raw: np.ndarray | None = None
    shadow: np.ndarray | None = None
    noise: np.ndarray | None = None
    normalized: np.ndarray | None = None
    n_coordinated: int = 0

    def copy_raw(self) -> "ChannelState":
        """Share raw fading/shadowing but drop noise-dependent members."""
        return ChannelState(raw=self.raw, shadow=self.shadow,
                            n_coordinated=self.n_coordinated)


def _cluster_sites(M: int) -> np.ndarray:
    d = INTER_SITE_M
    sites = np.array([
        [0.0, 0.0],
        [d, 0.0],
        [d / 2.0, d * np.sqrt(3.0) / 2.0],
    ])
    return sites[:M]


def path_gain(distance_m: np.ndarray | float) -> np.ndarray | float:
    """Distance-dependent power gain (200 / d)^3.5; unity at 200 m."""
    return (PATHLOSS_REF_M / np.asarray(distance_m, dtype=float)) ** PATHLOSS_EXPONENT


def build_topology(config: NetworkConfig, seed: int) -> Topology:
    """Place the coordinated cluster, the 24 uncoordinated BSs and all users.

    Deterministic given (config, seed). Uncoordinated sites are the 24
    hexagonal-lattice points nearest to the cluster centroid (ties broken by
    coordinates), which reproduces the two surrounding tiers.
    """
    if config.M > 3:
        raise ConfigurationError(
            f"layout generator supports 1..3 coordinated BSs, got M={config.M}")
    rng = np.random.default_rng(seed)
    cluster = _cluster_sites(config.M)
    centroid = cluster.mean(axis=0)

    a = np.array([INTER_SITE_M, 0.0])
    b = np.array([INTER_SITE_M / 2.0, INTER_SITE_M * np.sqrt(3.0) / 2.0])
    lattice = []
    for i in range(-6, 7):
        for j in range(-6, 7):
            p = i * a + j * b
            if any(np.allclose(p, c, atol=1e-6) for c in cluster):
                continue
            lattice.append(p)
    lattice = np.array(lattice)
    dist = np.linalg.norm(lattice - centroid, axis=1)
    # sort by distance, then coordinates, for a fully deterministic ring order
    order = np.lexsort((lattice[:, 1], lattice[:, 0], np.round(dist, 6)))
    outer = lattice[order[:N_UNCOORDINATED]]

    radius = rng.uniform(USER_RADIUS_MIN_M, USER_RADIUS_MAX_M, size=(config.M, config.K))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=(config.M, config.K))
    offsets = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
    user_xy = cluster[:, None, :] + offsets

    serving = np.repeat(np.arange(config.M)[:, None], config.K, axis=1)
    return Topology(bs_xy=np.vstack([cluster, outer]), user_xy=user_xy,
                    serving=serving, n_coordinated=config.M)


def draw_channels(topology: Topology, config: NetworkConfig, seed: int) -> ChannelState:
    """Draw shadowing and small-scale fading for every (BS, user, subchannel).

    Returns a ChannelState with ``raw`` and ``shadow`` filled; noise and
    normalized channels are computed by :func:`compute_noise` and
    :func:`normalize_channels`.
    """
    rng = np.random.default_rng(seed)
    n_bs = topology.bs_xy.shape[0]
    n_users = config.n_users
    dist = topology.user_bs_distances()

    shadow_db = rng.normal(0.0, SHADOWING_STD_DB, size=(n_bs, n_users))
    shadow = 10.0 ** (shadow_db / 10.0)

    shape = (n_bs, n_users, config.N, config.Nt)
    fading = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    amp = np.sqrt(path_gain(dist) * shadow)
    raw = amp[:, :, None, None] * fading
    return ChannelState(raw=raw, shadow=shadow, n_coordinated=config.M)


def compute_noise(topology: Topology, config: NetworkConfig,
                  channels: ChannelState) -> np.ndarray:
    """Long-term noise map: thermal floor plus uncoordinated-BS interference.

    noise[g, n] = sigma^2 + sum over uncoordinated BSs of
    (200/d)^3.5 * L * Pmax / N. Fills ``channels.noise`` and returns it.
    """
    if channels.shadow is None:
        raise InvalidStateError("draw_channels must run before compute_noise")
    dist = topology.user_bs_distances()
    m0 = topology.n_coordinated
    gains = path_gain(dist[m0:]) * channels.shadow[m0:]       # (24, MK)
    out_power = gains.sum(axis=0) * config.Pmax / config.N    # (MK,)
    noise = config.sigma2 + out_power
    channels.noise = np.repeat(noise[:, None], config.N, axis=1)
    return channels.noise


def normalize_channels(channels: ChannelState) -> ChannelState:
    """Fill ``normalized`` with raw / sqrt(noise) for the coordinated BSs."""
    if channels.raw is None or channels.noise is None:
        raise InvalidStateError("raw channels and noise must exist before normalization")
    if np.any(channels.noise <= 0):
        raise InvalidStateError("noise power must be strictly positive")
    m0 = channels.n_coordinated
    scale = 1.0 / np.sqrt(channels.noise)                     # (MK, N)
    normalized = channels.raw[:m0] * scale[None, :, :, None]
    if not np.all(np.isfinite(normalized)):
        raise InvalidStateError("normalized channels contain non-finite entries")
    norms = np.linalg.norm(normalized, axis=-1)
    if np.any(norms == 0.0):
        raise DegenerateChannelError("all-zero channel vector encountered")
    channels.normalized = normalized
    return channels


def realize_network(config: NetworkConfig, seed: int) -> tuple[Topology, ChannelState]:
    """Topology + fully normalized channels from a single master seed."""
    s_topo, s_chan = np.random.SeedSequence(seed).generate_state(2)
    topology = build_topology(config, int(s_topo))
    channels = draw_channels(topology, config, int(s_chan))
    compute_noise(topology, config, channels)
    normalize_channels(channels)
    return topology, channels


def apply_noise(topology: Topology, config: NetworkConfig,
                channels: ChannelState) -> ChannelState:
    """Noise + normalization for an existing raw draw (used by SNR sweeps)."""
    fresh = channels.copy_raw()
    compute_noise(topology, config, fresh)
    return normalize_channels(fresh)


# ---------------------------------------------------------------------------
# debug CSV dumps
# ---------------------------------------------------------------------------

def dump_topology_csv(topology: Topology, path: str | Path) -> None:
    """Columns: kind, cell, index, x_m, y_m. BS rows first, then users."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "cell", "index", "x_m", "y_m"])
        for b, (x, y) in enumerate(topology.bs_xy):
            kind = "bs_coordinated" if b < topology.n_coordinated else "bs_uncoordinated"
            writer.writerow([kind, "", b, f"{x:.6f}", f"{y:.6f}"])
        for m in range(topology.user_xy.shape[0]):
            for k in range(topology.user_xy.shape[1]):
                x, y = topology.user_xy[m, k]
                writer.writerow(["user", m, k, f"{x:.6f}", f"{y:.6f}"])


def dump_channels_csv(channels: ChannelState, path: str | Path) -> None:
    """Normalized channels, one row per (m, k, n): m, k, n, re/im per antenna."""
    if channels.normalized is None:
        raise InvalidStateError("normalize_channels must run before dumping")
    h = channels.normalized
    m_count, n_users, n_sub, nt = h.shape
    header = ["m", "k", "n"]
    for a in range(nt):
        header += [f"re{a}", f"im{a}"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for m in range(m_count):
            for g in range(n_users):
                for n in range(n_sub):
                    row = [m, g, n]
                    for a in range(nt):
                        row += [f"{h[m, g, n, a].real:.12e}", f"{h[m, g, n, a].imag:.12e}"]
                    writer.writerow(row)

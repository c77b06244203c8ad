"""SINR, rates, leakage ratio and per-BS power for a channel/beam pair.

Channels are noise-normalized upstream, so every denominator here uses a
noise floor of exactly 1. Rates are base-2 (bits per channel use) throughout.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import NetworkConfig
from .errors import UsageError
from .network import ChannelState

#: Relative slack applied to the per-BS power budget when checking feasibility.
POWER_FEASIBILITY_RTOL = 1e-9


def empty_beams(config: NetworkConfig) -> np.ndarray:
    """All-zero beam array of shape (M, K, N, Nt)."""
    return np.zeros((config.M, config.K, config.N, config.Nt), dtype=complex)


def check_active(config: NetworkConfig, m: int, k: int, n: int) -> None:
    if not config.is_active(m, k, n):
        raise UsageError(f"triple (m={m}, k={k}, n={n}) is not active")


def received_powers(channels: ChannelState, beams: np.ndarray) -> np.ndarray:
    """|h_{j,g}(n)^H v_{j,u}(n)|^2 for every beam (j,u) and receiver g.

    Returns shape (M, K, MK, N); inactive beams contribute exact zeros.
    """
    h = channels.normalized
    amps = np.einsum("jgna,juna->jugn", h.conj(), beams)
    return np.abs(amps) ** 2


def sinr_all(channels: ChannelState, beams: np.ndarray,
             config: NetworkConfig) -> np.ndarray:
    """SINR per active triple, shape (M, K, N); zeros where inactive."""
    p = received_powers(channels, beams)
    active = config.assignment
    total = np.einsum("jugn,jun->gn", p, active.astype(float))   # (MK, N)
    gids = np.arange(config.n_users)
    sig = p[gids // config.K, gids % config.K, gids, :].reshape(
        config.M, config.K, config.N)
    interf = total.reshape(config.M, config.K, config.N) - sig
    out = np.where(active, sig / (1.0 + interf), 0.0)
    return out


def sinr(channels: ChannelState, beams: np.ndarray, config: NetworkConfig,
         m: int, k: int, n: int) -> float:
    """Desired power over (1 + co-subchannel interference) for user (m, k)."""
    check_active(config, m, k, n)
    return float(sinr_all(channels, beams, config)[m, k, n])


def rates_all(channels: ChannelState, beams: np.ndarray,
              config: NetworkConfig) -> np.ndarray:
    return np.log2(1.0 + sinr_all(channels, beams, config))


def weighted_sum_rate(channels: ChannelState, beams: np.ndarray,
                      config: NetworkConfig) -> float:
    """sum over active (m, k, n) of w_k(n) * log2(1 + SINR_{m,k}(n))."""
    rates = rates_all(channels, beams, config)
    return float(np.sum(config.weights * rates * config.assignment))


def bs_power(beams: np.ndarray, m: int) -> float:
    """Total transmit power of BS m: sum of squared beam norms."""
    return float(np.sum(np.abs(beams[m]) ** 2))


def bs_powers(beams: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(beams) ** 2, axis=(1, 2, 3))


def power_feasible(beams: np.ndarray, config: NetworkConfig) -> bool:
    return bool(np.all(bs_powers(beams) <= config.Pmax * (1.0 + POWER_FEASIBILITY_RTOL)))


def slnr(channels: ChannelState, beams: np.ndarray, config: NetworkConfig,
         m: int, k: int, n: int) -> float:
    """Signal-to-leakage-plus-noise ratio of beam (m, k, n).

    Leakage is measured on BS m's own channels towards every other active
    co-subchannel user (intra- and inter-cell):

        |h_{m,k}^H v|^2 / (1 + sum_{(j,u) != (m,k)} |h_{m,u}^H v|^2)
    """
    check_active(config, m, k, n)
    h = channels.normalized
    v = beams[m, k, n]
    own = config.user_id(m, k)
    sig = abs(np.vdot(h[m, own, n], v)) ** 2
    leak = 0.0
    for j in range(config.M):
        for u in range(config.K):
            if (j, u) == (m, k) or not config.is_active(j, u, n):
                continue
            leak += abs(np.vdot(h[m, config.user_id(j, u), n], v)) ** 2
    return float(sig / (1.0 + leak))


@dataclass
class RateReport:
    """Per-triple SINRs/rates plus the aggregates the experiments record."""
    sinr: np.ndarray          # (M, K, N)
    rate: np.ndarray          # (M, K, N), log2(1 + SINR)
    weighted_sum_rate: float
    user_rates: np.ndarray    # (M, K), total rate per user across subchannels
    powers: np.ndarray        # (M,)

    def csv_rows(self, trial: int, algo: str) -> list[list]:
        rows = []
        m_count, k_count, n_count = self.sinr.shape
        for m in range(m_count):
            for k in range(k_count):
                for n in range(n_count):
                    rows.append([trial, algo, m, k, n,
                                 f"{self.sinr[m, k, n]:.10g}",
                                 f"{self.rate[m, k, n]:.10g}"])
        return rows


RATE_REPORT_HEADER = ["trial", "algo", "m", "k", "n", "sinr", "rate"]


def rate_report(channels: ChannelState, beams: np.ndarray,
                config: NetworkConfig) -> RateReport:
    s = sinr_all(channels, beams, config)
    r = np.log2(1.0 + s)
    wsr = float(np.sum(config.weights * r * config.assignment))
    user_rates = np.sum(r * config.assignment, axis=2)
    return RateReport(sinr=s, rate=r, weighted_sum_rate=wsr,
                      user_rates=user_rates, powers=bs_powers(beams))


def per_user_rate_samples(reports: list[RateReport]) -> np.ndarray:
    """Sorted per-user total rates across trials; the empirical CDF support."""
    samples = np.concatenate([rep.user_rates.ravel() for rep in reports])
    return np.sort(samples)


def write_rate_reports_csv(path: str | Path,
                           rows: list[tuple[int, str, RateReport]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATE_REPORT_HEADER)
        for trial, algo, rep in rows:
            writer.writerows(rep.csv_rows(trial, algo))

"""Baseline beamformers: channel-matched, per-cell zero-forcing, max-SLNR.

All three split the power budget evenly across the N*K beams of a BS, so the
per-BS power constraint holds with equality under the default full
assignment.
"""
from __future__ import annotations

import numpy as np

from .config import NetworkConfig
from .errors import ConfigurationError, DegenerateChannelError
from .metrics import empty_beams
from .network import ChannelState


def _beam_scale(config: NetworkConfig) -> float:
    return np.sqrt(config.Pmax / (config.N * config.K))


def init_cm(channels: ChannelState, config: NetworkConfig) -> np.ndarray:
    """Channel-matched (maximum ratio transmission) beams.

    v_{m,k}(n) = sqrt(Pmax / (N K)) * h_{m,k}(n) / ||h_{m,k}(n)||
    """
    h = channels.normalized
    beams = empty_beams(config)
    scale = _beam_scale(config)
    for m in range(config.M):
        for k in range(config.K):
            own = h[m, config.user_id(m, k)]                  # (N, Nt)
            norms = np.linalg.norm(own, axis=-1)
            if np.any(norms == 0.0):
                raise DegenerateChannelError(f"zero channel for user ({m}, {k})")
            beams[m, k] = scale * own / norms[:, None]
    beams *= config.assignment[..., None]
    return beams


def init_zf(channels: ChannelState, config: NetworkConfig) -> np.ndarray:
    """Per-cell zero-forcing beams.

    Each beam is the channel projected onto the orthogonal complement of the
    other active same-cell channels on the subchannel, then renormalized:

        v = sqrt(Pmax / (N K)) * P_perp h / ||P_perp h||

    Requires Nt >= (active users per cell per subchannel); nulling the K-1
    same-cell channels needs that many spare dimensions.
    """
    h = channels.normalized
    beams = empty_beams(config)
    scale = _beam_scale(config)
    eye = np.eye(config.Nt, dtype=complex)
    for m in range(config.M):
        for n in range(config.N):
            active = [k for k in range(config.K) if config.is_active(m, k, n)]
            if len(active) > config.Nt:
                raise ConfigurationError(
                    f"zero-forcing needs Nt >= active users per cell; "
                    f"cell {m} subchannel {n} has {len(active)} > Nt={config.Nt}")
            for k in active:
                others = [config.user_id(m, u) for u in active if u != k]
                hk = h[m, config.user_id(m, k), n]
                if others:
                    stacked = h[m, others, n].T               # (Nt, K-1)
                    gram = stacked.conj().T @ stacked
                    proj = stacked @ np.linalg.solve(gram, stacked.conj().T)
                    residual = (eye - proj) @ hk
                else:
                    residual = hk
                norm = np.linalg.norm(residual)
                if norm <= 1e-14 * np.linalg.norm(hk):
                    raise DegenerateChannelError(
                        f"channel of user ({m}, {k}) lies in the span of its "
                        f"same-cell co-subchannel channels")
                beams[m, k, n] = scale * residual / norm
    return beams


def init_mslnr(channels: ChannelState, config: NetworkConfig,
               unit_norm: bool = False) -> np.ndarray:
    """Maximum signal-to-leakage-plus-noise-ratio beams.

    Direction maximizes |h^H x|^2 / (x^H D x) with

        D = sum over other active co-subchannel users of h_u h_u^H
            + (N K / Pmax) * I

    The numerator matrix is rank one, so the dominant generalized eigenvector
    is D^{-1} h up to scale; a Hermitian PD solve replaces any
    eigendecomposition. Default scaling keeps the equal power split
    ||v||^2 = Pmax / (N K); ``unit_norm=True`` rescales every beam to norm 1
    (not power-feasible for N K > Pmax, provided for comparison only).
    """
    h = channels.normalized
    beams = empty_beams(config)
    scale = 1.0 if unit_norm else _beam_scale(config)
    ridge = config.N * config.K / config.Pmax
    eye = np.eye(config.Nt, dtype=complex)
    for m in range(config.M):
        for n in range(config.N):
            for k in range(config.K):
                if not config.is_active(m, k, n):
                    continue
                dmat = ridge * eye.copy()
                for j in range(config.M):
                    for u in range(config.K):
                        if (j, u) == (m, k) or not config.is_active(j, u, n):
                            continue
                        hu = h[m, config.user_id(j, u), n]
                        dmat += np.outer(hu, hu.conj())
                hk = h[m, config.user_id(m, k), n]
                direction = np.linalg.solve(dmat, hk)
                norm = np.linalg.norm(direction)
                if norm == 0.0:
                    raise DegenerateChannelError(f"zero channel for user ({m}, {k})")
                beams[m, k, n] = scale * direction / norm
    return beams


INITIALIZERS = {"cm": init_cm, "zf": init_zf, "mslnr": init_mslnr}


def make_initial_beams(name: str, channels: ChannelState,
                       config: NetworkConfig) -> np.ndarray:
    try:
        fn = INITIALIZERS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown initializer '{name}', expected one of {sorted(INITIALIZERS)}")
    return fn(channels, config)

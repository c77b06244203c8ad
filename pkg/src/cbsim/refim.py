"""Reference-user machinery: selection, truncated leakage, feedback accounting.

Instead of summing leakage over every co-subchannel user, a BS approximates
its leakage matrix with the few users that absorb most of it. The reference
users of beam (m, k, n) are the candidates u with the largest

    score(u) = ||h_{m,u}(n)||^2 * |h_{m,u}(n)^H h_{m,k}(n)|^2
             = ||G_{m,u}(n) h_{m,k}(n)||^2,

drawn from all scheduled users on the subchannel across the neighbourhood of
BS m (its own cell included, since intra-cell leakage matters too). With
single-antenna transmitters the alignment factor is common to all candidates
and the rule degenerates to picking the strongest channel gain.
"""
from __future__ import annotations

import numpy as np

from .config import NetworkConfig
from .errors import ConfigurationError
from .metrics import check_active
from .network import ChannelState
from .solver import LN2, Leakage, q_coefficients


def neighbour_sets(config: NetworkConfig) -> list[set[int]]:
    """N(m) per BS. The coordinated cluster is small, so it is a full mesh
    and every set contains the BS itself."""
    return [set(range(config.M)) for _ in range(config.M)]


def scheduled_users(config: NetworkConfig, m: int, n: int) -> list[tuple[int, int]]:
    """All (cell, user) pairs active on subchannel n across N(m)."""
    hood = neighbour_sets(config)[m]
    return [(j, u) for j in sorted(hood) for u in range(config.K)
            if config.is_active(j, u, n)]


def reference_scores(channels: ChannelState, config: NetworkConfig,
                     m: int, k: int, n: int,
                     candidates: list[tuple[int, int]]) -> np.ndarray:
    h = channels.normalized
    hk = h[m, config.user_id(m, k), n]
    scores = np.empty(len(candidates))
    for idx, (j, u) in enumerate(candidates):
        hu = h[m, config.user_id(j, u), n]
        scores[idx] = np.sum(np.abs(hu) ** 2) * np.abs(np.vdot(hu, hk)) ** 2
    return scores


def select_references(channels: ChannelState, config: NetworkConfig,
                      m: int, k: int, n: int, r_count: int) -> list[tuple[int, int]]:
    """The r_count highest-scoring candidates, descending score.

    Candidates are the scheduled users of the neighbourhood minus (m, k)
    itself. Ties break towards the lowest (cell, user) index; asking for more
    references than candidates returns them all.
    """
    check_active(config, m, k, n)
    if r_count < 0:
        raise ConfigurationError(f"reference count must be >= 0, got {r_count}")
    candidates = [(j, u) for (j, u) in scheduled_users(config, m, n) if (j, u) != (m, k)]
    if r_count == 0 or not candidates:
        return []
    scores = reference_scores(channels, config, m, k, n, candidates)
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], candidates[i]))
    return [candidates[i] for i in order[:r_count]]


def reference_map(channels: ChannelState, config: NetworkConfig,
                  r_count: int) -> dict[tuple[int, int, int], list[tuple[int, int]]]:
    """References for every active triple."""
    refs = {}
    for m in range(config.M):
        for n in range(config.N):
            for k in range(config.K):
                if config.is_active(m, k, n):
                    refs[(m, k, n)] = select_references(channels, config, m, k, n, r_count)
    return refs


def leakage_refim_from_q(channels: ChannelState, config: NetworkConfig,
                         q: np.ndarray, m: int, k: int, n: int,
                         refs: list[tuple[int, int]]) -> Leakage:
    h = channels.normalized
    nt = config.Nt
    mat = np.zeros((nt, nt), dtype=complex)
    terms = []
    for (j, u) in refs:
        g = config.user_id(j, u)
        hu = h[m, g, n]
        coeff = float(q[g, n])
        mat += coeff * np.outer(hu, hu.conj())
        terms.append((coeff, hu))
    return Leakage(matrix=mat, rank_hint=len(refs), terms=terms)


def leakage_refim(channels: ChannelState, beams: np.ndarray, config: NetworkConfig,
                  m: int, k: int, n: int,
                  refs: list[tuple[int, int]]) -> Leakage:
    """Rank-limited leakage: only the reference users' terms are summed.

    An empty reference list yields the zero matrix (selfish single-cell
    mode); passing every candidate reproduces the full leakage matrix
    exactly. The rank-one terms are kept so the inverse can be built without
    any dense factorization.
    """
    check_active(config, m, k, n)
    q = q_coefficients(channels, beams, config)
    return leakage_refim_from_q(channels, config, q, m, k, n, refs)


def invert_rank_r(terms: list[tuple[float, np.ndarray]], lam: float,
                  nt: int | None = None) -> np.ndarray:
    """Exact inverse of (lambda*ln2*I + sum_r q_r h_r h_r^H) by sequential
    rank-one updates.

    Each update divides by 1 + q * h^H A^{-1} h > 0 (the terms are PSD), so
    the recursion never degenerates. With a single term this reduces to the
    closed inverse-free expression.
    """
    if nt is None:
        if not terms:
            raise ConfigurationError("need nt when the term list is empty")
        nt = terms[0][1].shape[0]
    gamma = np.eye(nt, dtype=complex) / (lam * LN2)
    for coeff, vec in terms:
        if coeff == 0.0:
            continue
        gv = gamma @ vec
        denom = 1.0 + coeff * np.vdot(vec, gv).real
        gamma = gamma - (coeff / denom) * np.outer(gv, gv.conj())
    return 0.5 * (gamma + gamma.conj().T)


# ---------------------------------------------------------------------------
# inter-BS feedback accounting
# ---------------------------------------------------------------------------

#: reals exchanged per user for the channel vector (2*Nt) and for the
#: weight / received-signal-strength / interference-plus-noise scalars (3).
SCALAR_FEEDBACK_REALS = 3


def out_of_cell_reference_counts(config: NetworkConfig,
                                 refmap: dict) -> np.ndarray:
    """Distinct reference users of BS m on subchannel n served by other BSs.

    Intra-cell references cost nothing on the backhaul (the BS already knows
    its own users), and a user referenced by several of BS m's beams is
    fetched once.
    """
    counts = np.zeros((config.M, config.N), dtype=int)
    for m in range(config.M):
        for n in range(config.N):
            distinct = set()
            for k in range(config.K):
                for (j, u) in refmap.get((m, k, n), []):
                    if j != m:
                        distinct.add((j, u))
            counts[m, n] = len(distinct)
    return counts


def feedback_bits(config: NetworkConfig, algo: str,
                  out_of_cell_refs: np.ndarray | None = None,
                  qbits: int = 8) -> int:
    """Total inter-BS feedback bits for one scheduling interval.

    Four information classes flow between BSs for each out-of-cell neighbour
    user: the channel vector (2*Nt reals) plus three scalars (weight,
    received signal strength, interference-plus-noise strength). The full
    algorithm fetches all four classes for every neighbour user; the
    reference-user variant still fetches every channel vector but only the
    reference users' scalars:

        icbf     reals(m, n) = |U(m, n)| * (2*Nt + 3)
        cb_refim reals(m, n) = |U(m, n)| * 2*Nt + 3 * distinct_refs(m, n)

    where U(m, n) are the users scheduled on n and served by N(m) \\ {m}.
    Bits = reals * qbits.
    """
    if algo not in ("icbf", "icbf_wi", "cb_refim"):
        raise ConfigurationError(f"no feedback model for algorithm '{algo}'")
    hoods = neighbour_sets(config)
    reals = 0
    for m in range(config.M):
        for n in range(config.N):
            others = sum(1 for j in hoods[m] if j != m
                         for u in range(config.K) if config.is_active(j, u, n))
            if algo == "cb_refim":
                if out_of_cell_refs is None:
                    raise ConfigurationError(
                        "cb_refim feedback accounting needs reference counts")
                reals += others * 2 * config.Nt
                reals += SCALAR_FEEDBACK_REALS * int(out_of_cell_refs[m, n])
            else:
                reals += others * (2 * config.Nt + SCALAR_FEEDBACK_REALS)
    return reals * qbits

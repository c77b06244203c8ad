"""Iterative coordinated beamforming via KKT fixed-point iteration.

The weighted-sum-rate problem with per-BS power budgets is attacked through
its stationarity condition: every beam satisfies

    (L + lambda * ln2 * I) v = w * G v / (1 + v^H G v + i)

where L is the beam's leakage matrix, i the co-channel interference at its
user, G = h h^H, and lambda the per-BS dual variable. Beams therefore take
the form v = beta * Gamma * h with Gamma an (approximate) inverse of
T = L + lambda*ln2*I. Three variants are provided:

  icbf      Gamma is the exact inverse (Hermitian PD solve).
  icbf_wi   Gamma is the inverse-free rank-one expression
            (I - L / (lambda*ln2 + tr L)) / (lambda*ln2), exact whenever
            rank(L) <= 1 and the working approximation otherwise.
  cb_refim  the leakage matrix is truncated to reference-user terms and
            Gamma is the exact inverse of that low-rank-plus-identity matrix,
            obtained by sequential rank-one updates (no dense inversion).

The double loop recomputes leakage matrices in the outer loop and
(interference, dual variables, beam scalings, beams) in the inner loop;
per-BS duals are found by bisection on the transmit power, which is
non-increasing in the dual.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .config import NetworkConfig
from .errors import BracketError, ConfigurationError, InvalidStateError, UsageError
from .metrics import (bs_powers, check_active, empty_beams, received_powers,
                      weighted_sum_rate)
from .network import ChannelState

LN2 = float(np.log(2.0))

GAMMA_MODES = ("direct", "sherman_morrison", "rank_r")
ALGORITHMS = ("icbf", "icbf_wi", "cb_refim")
_ALGO_GAMMA = {"icbf": "direct", "icbf_wi": "sherman_morrison", "cb_refim": "rank_r"}

BISECT_MAX_STEPS = 200
BISECT_WIDTH_RTOL = 1e-12   # bracket width relative to the upper bound
BISECT_POWER_RTOL = 1e-6    # accepted gap between f(lambda) and Pmax


@dataclass
class Leakage:
    """Hermitian PSD leakage matrix with bookkeeping.

    matrix:    (Nt, Nt) sum of q * h h^H terms
    rank_hint: number of rank-one terms summed
    terms:     optional list of (q, h) pairs, kept when the low-rank structure
               is needed downstream (reference-user mode)
    """
    matrix: np.ndarray
    rank_hint: int
    terms: list[tuple[float, np.ndarray]] | None = None


def interference_all(channels: ChannelState, beams: np.ndarray,
                     config: NetworkConfig) -> np.ndarray:
    """Co-channel interference i_{m,k}(n) for every triple, shape (M, K, N)."""
    p = received_powers(channels, beams)
    total = np.einsum("jugn,jun->gn", p, config.assignment.astype(float))
    gids = np.arange(config.n_users)
    sig = p[gids // config.K, gids % config.K, gids, :]
    return (total - sig).reshape(config.M, config.K, config.N)


def interference(channels: ChannelState, beams: np.ndarray, config: NetworkConfig,
                 m: int, k: int, n: int) -> float:
    """Power user (m, k) receives on subchannel n from all other active beams."""
    check_active(config, m, k, n)
    return float(interference_all(channels, beams, config)[m, k, n])


def q_coefficients(channels: ChannelState, beams: np.ndarray,
                   config: NetworkConfig) -> np.ndarray:
    """Leakage weights q per (global user, subchannel), shape (MK, N).

    q_u(n) = w_u(n) * SINR_u(n) / (1 + total received power at user u),
    where the denominator includes the user's own desired-signal term.
    Inactive users get q = 0.
    """
    p = received_powers(channels, beams)
    total = np.einsum("jugn,jun->gn", p, config.assignment.astype(float))
    gids = np.arange(config.n_users)
    sig = p[gids // config.K, gids % config.K, gids, :]
    sinr = sig / (1.0 + total - sig)
    w = config.weights.reshape(config.n_users, config.N)
    active = config.assignment.reshape(config.n_users, config.N)
    return np.where(active, w * sinr / (1.0 + total), 0.0)


def _leakage_full_from_q(channels: ChannelState, config: NetworkConfig,
                         q: np.ndarray, m: int, k: int, n: int) -> Leakage:
    h = channels.normalized
    own = config.user_id(m, k)
    mat = np.zeros((config.Nt, config.Nt), dtype=complex)
    count = 0
    for j in range(config.M):
        for u in range(config.K):
            g = config.user_id(j, u)
            if g == own or not config.is_active(j, u, n):
                continue
            hu = h[m, g, n]
            mat += q[g, n] * np.outer(hu, hu.conj())
            count += 1
    return Leakage(matrix=mat, rank_hint=count)


def leakage_full(channels: ChannelState, beams: np.ndarray, config: NetworkConfig,
                 m: int, k: int, n: int) -> Leakage:
    """Full leakage matrix of beam (m, k, n).

    L = sum over every other active co-subchannel user u (all cells) of
    q_u(n) * h_{m,u}(n) h_{m,u}(n)^H -- the harm BS m causes while serving
    user k, weighted by how much each victim's rate reacts.
    """
    check_active(config, m, k, n)
    q = q_coefficients(channels, beams, config)
    return _leakage_full_from_q(channels, config, q, m, k, n)


def gamma_direct(leakage: Leakage | np.ndarray, lam: float) -> np.ndarray:
    """Exact Gamma = (L + lambda*ln2*I)^{-1} via a Hermitian PD solve."""
    mat = leakage.matrix if isinstance(leakage, Leakage) else leakage
    nt = mat.shape[0]
    t = mat + lam * LN2 * np.eye(nt)
    gamma = scipy.linalg.solve(t, np.eye(nt, dtype=complex), assume_a="pos")
    return 0.5 * (gamma + gamma.conj().T)


def gamma_sherman_morrison(leakage: Leakage | np.ndarray, lam: float) -> np.ndarray:
    """Inverse-free Gamma: (I - L / (lambda*ln2 + tr L)) / (lambda*ln2).

    A rank-one downdate identity makes this the exact inverse whenever
    rank(L) <= 1; for higher rank it is the working approximation and is
    returned as-is. Always Hermitian positive definite, because every
    eigenvalue of L is at most tr L.
    """
    mat = leakage.matrix if isinstance(leakage, Leakage) else leakage
    nt = mat.shape[0]
    x = lam * LN2
    gamma = (np.eye(nt) - mat / (x + np.trace(mat).real)) / x
    return 0.5 * (gamma + gamma.conj().T)


def _gamma_for_mode(leakage: Leakage, lam: float, gamma_mode: str) -> np.ndarray:
    if gamma_mode == "direct":
        return gamma_direct(leakage, lam)
    if gamma_mode == "sherman_morrison":
        return gamma_sherman_morrison(leakage, lam)
    if gamma_mode == "rank_r":
        from .refim import invert_rank_r
        if leakage.terms is None:
            raise UsageError("rank_r mode needs a leakage built from rank-one terms")
        return invert_rank_r(leakage.terms, lam, nt=leakage.matrix.shape[0])
    raise ConfigurationError(f"unknown gamma mode '{gamma_mode}'")


def beta(channels: ChannelState, config: NetworkConfig, m: int, k: int, n: int,
         gamma: np.ndarray, interference_value: float,
         weight: float | None = None) -> float:
    """Beam power scalar: beta^2 = [w*u - i - 1]^+ / u^2 with u = h^H Gamma h.

    beta = 0 switches the beam off. Gamma must be Hermitian PD, which makes
    u real and positive; a complex residue above 1e-10 relative flags broken
    numerical state.
    """
    check_active(config, m, k, n)
    if weight is None:
        weight = float(config.weights[m, k, n])
    h = channels.normalized[m, config.user_id(m, k), n]
    u_c = np.vdot(h, gamma @ h)
    u = float(u_c.real)
    if abs(u_c.imag) > 1e-10 * max(abs(u), 1e-300):
        raise InvalidStateError(f"h^H Gamma h has a complex residue: {u_c!r}")
    if u <= 0.0:
        raise InvalidStateError(f"h^H Gamma h = {u!r} violates positive definiteness")
    num = max(weight * u - interference_value - 1.0, 0.0)
    return float(np.sqrt(num) / u)


class _DualEvaluator:
    """Fast (u, ||Gamma h||^2) evaluation over one BS's active triples.

    For the exact-inverse modes the leakage matrices are eigendecomposed once,
    after which every dual value costs O(Nt) per triple:

        u(lam)  = sum_i p_i / (e_i + lam*ln2)
        g2(lam) = sum_i p_i / (e_i + lam*ln2)^2

    with p_i = |V^H h|_i^2. The inverse-free mode uses its closed form
    directly. Both paths agree with gamma_direct / gamma_sherman_morrison up
    to rounding.
    """

    def __init__(self, channels: ChannelState, leakages: dict, config: NetworkConfig,
                 m: int, gamma_mode: str):
        self.exact = gamma_mode in ("direct", "rank_r")
        triples = [(k, n) for n in range(config.N) for k in range(config.K)
                   if config.is_active(m, k, n)]
        self.triples = triples
        hs = np.stack([channels.normalized[m, config.user_id(m, k), n]
                       for k, n in triples])                       # (A, Nt)
        mats = np.stack([leakages[(m, k, n)].matrix for k, n in triples])
        self.hh = np.sum(np.abs(hs) ** 2, axis=1)
        if self.exact:
            evals, vecs = np.linalg.eigh(mats)
            self.evals = np.clip(evals, 0.0, None)                 # PSD up to rounding
            proj = np.einsum("aij,aj->ai", vecs.conj().transpose(0, 2, 1), hs)
            self.proj = np.abs(proj) ** 2
        else:
            self.hs = hs
            self.lh = np.einsum("aij,aj->ai", mats, hs)
            self.tr = np.einsum("aii->a", mats).real

    def u_g2(self, lam: float) -> tuple[np.ndarray, np.ndarray]:
        x = lam * LN2
        if self.exact:
            d = self.evals + x
            return np.sum(self.proj / d, axis=1), np.sum(self.proj / d ** 2, axis=1)
        # Gamma h = (h - L h / (x + tr L)) / x. Form the residual vector before
        # taking norms: expanding ||.||^2 into scalar terms cancels
        # catastrophically near the dual floor when L is (close to) rank one
        # and aligned with h, and can even turn the power negative.
        scale = 1.0 / (x + self.tr)
        r = self.hs - scale[:, None] * self.lh
        u = np.einsum("ai,ai->a", self.hs.conj(), r).real / x
        g2 = np.sum(np.abs(r) ** 2, axis=1) / x ** 2
        return u, g2


def _betas_power(ev: _DualEvaluator, lam: float, weights: np.ndarray,
                 interf: np.ndarray) -> tuple[np.ndarray, float]:
    u, g2 = ev.u_g2(lam)
    b2 = np.clip(weights * u - interf - 1.0, 0.0, None) / u ** 2
    return np.sqrt(b2), float(np.sum(b2 * g2))


def lambda_bisection(channels: ChannelState, leakages: dict, interference_map: np.ndarray,
                     config: NetworkConfig, m: int,
                     gamma_mode: str) -> tuple[float, np.ndarray]:
    """Per-BS dual variable and beam scalings.

    Returns the smallest lambda in [lambda_min, lambda_upper] whose implied
    transmit power f(lambda) fits the budget, exploiting that f is
    non-increasing in lambda. lambda_upper = max w ||h||^2 / ln2 over the
    BS's triples forces every beta to zero, so the bracket always contains a
    feasible point. The returned beta array has shape (K, N) with zeros at
    inactive triples.
    """
    ev = _DualEvaluator(channels, leakages, config, m, gamma_mode)
    if not ev.triples:
        return config.lambda_min, np.zeros((config.K, config.N))
    weights = np.array([config.weights[m, k, n] for k, n in ev.triples])
    interf = np.array([interference_map[m, k, n] for k, n in ev.triples])

    def pack(betas: np.ndarray) -> np.ndarray:
        out = np.zeros((config.K, config.N))
        for idx, (k, n) in enumerate(ev.triples):
            out[k, n] = betas[idx]
        return out

    pmax = config.Pmax
    betas_lo, f_lo = _betas_power(ev, config.lambda_min, weights, interf)
    if f_lo <= pmax:
        return config.lambda_min, pack(betas_lo)

    lam_up = float(np.max(weights * ev.hh) / LN2)
    betas_hi, f_hi = _betas_power(ev, lam_up, weights, interf)
    if f_hi > pmax:
        raise BracketError(
            f"power at the dual upper bound exceeds the budget: f({lam_up}) = {f_hi}")

    lo, hi = config.lambda_min, lam_up
    for _ in range(BISECT_MAX_STEPS):
        if hi - lo <= BISECT_WIDTH_RTOL * lam_up:
            break
        if pmax - f_hi <= BISECT_POWER_RTOL * pmax:
            break
        mid = 0.5 * (lo + hi)
        betas_mid, f_mid = _betas_power(ev, mid, weights, interf)
        if f_mid <= pmax:
            hi, betas_hi, f_hi = mid, betas_mid, f_mid
        else:
            lo = mid
    return float(hi), pack(betas_hi)


def update_beams(channels: ChannelState, leakages: dict, duals: np.ndarray,
                 betas: np.ndarray, config: NetworkConfig,
                 gamma_mode: str) -> np.ndarray:
    """Fresh beams v = beta * Gamma * h for every active triple."""
    beams = empty_beams(config)
    h = channels.normalized
    for m in range(config.M):
        for n in range(config.N):
            for k in range(config.K):
                if not config.is_active(m, k, n):
                    continue
                b = betas[m, k, n]
                if b == 0.0:
                    continue
                gamma = _gamma_for_mode(leakages[(m, k, n)], float(duals[m]), gamma_mode)
                beams[m, k, n] = b * (gamma @ h[m, config.user_id(m, k), n])
    return beams


def _all_leakages(channels: ChannelState, beams: np.ndarray, config: NetworkConfig,
                  algo: str, refmap: dict | None) -> dict:
    q = q_coefficients(channels, beams, config)
    leakages = {}
    for m in range(config.M):
        for n in range(config.N):
            for k in range(config.K):
                if not config.is_active(m, k, n):
                    continue
                if algo == "cb_refim":
                    from .refim import leakage_refim_from_q
                    leakages[(m, k, n)] = leakage_refim_from_q(
                        channels, config, q, m, k, n, refmap[(m, k, n)])
                else:
                    leakages[(m, k, n)] = _leakage_full_from_q(
                        channels, config, q, m, k, n)
    return leakages


@dataclass
class SolverTrace:
    """Per-iteration diagnostics of one solve."""
    algo: str
    iteration_index: list[tuple[int, int]] = field(default_factory=list)
    sum_rates: list[float] = field(default_factory=list)
    bs_power_trace: list[np.ndarray] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    outer_sum_rates: list[float] = field(default_factory=list)
    init_sum_rate: float = 0.0
    inner_converged: list[bool] = field(default_factory=list)
    converged_outer: bool = False
    non_monotone_steps: int = 0
    duals: np.ndarray | None = None
    best_sum_rate: float = 0.0

    def to_csv(self, path: str | Path) -> None:
        """Columns: outer, inner, sum_rate, power_1..power_M, residual."""
        n_bs = len(self.bs_power_trace[0]) if self.bs_power_trace else 0
        header = ["outer", "inner", "sum_rate"]
        header += [f"power_{m + 1}" for m in range(n_bs)]
        header += ["residual"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for (outer, inner), wsr, powers, res in zip(
                    self.iteration_index, self.sum_rates,
                    self.bs_power_trace, self.residuals):
                row = [outer, inner, f"{wsr:.12g}"]
                row += [f"{p:.12g}" for p in powers]
                row.append(f"{res:.6g}")
                writer.writerow(row)


def solve(channels: ChannelState, config: NetworkConfig, init: np.ndarray,
          algo: str, ref_count: int = 1) -> tuple[np.ndarray, SolverTrace]:
    """Run the double-loop coordinated beamforming algorithm.

    Outer iterations recompute leakage matrices (and, for cb_refim, the
    reference users); inner iterations recompute interference, per-BS duals,
    beam scalings and beams, stopping on relative sum-rate stagnation or the
    iteration caps. The best iterate seen (the initializer included) is
    returned, so the result never degrades the starting point.
    """
    if algo not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm '{algo}', expected one of {ALGORITHMS}")
    powers0 = bs_powers(init)
    if np.any(powers0 > config.Pmax * (1.0 + 1e-9)):
        raise UsageError(f"initial beams violate the power budget: {powers0}")
    gamma_mode = _ALGO_GAMMA[algo]

    beams = init.copy()
    trace = SolverTrace(algo=algo)
    wsr = weighted_sum_rate(channels, beams, config)
    trace.init_sum_rate = wsr
    duals = np.full(config.M, config.lambda_min)
    best = (wsr, beams.copy(), duals.copy())

    prev_outer_wsr = wsr
    for outer in range(config.L_out_max):
        refmap = None
        if algo == "cb_refim":
            from .refim import reference_map
            refmap = reference_map(channels, config, ref_count)
        leakages = _all_leakages(channels, beams, config, algo, refmap)

        prev_inner_wsr = wsr
        for inner in range(config.L_in_max):
            interf = interference_all(channels, beams, config)
            betas = np.zeros((config.M, config.K, config.N))
            for m in range(config.M):
                duals[m], betas[m] = lambda_bisection(
                    channels, leakages, interf, config, m, gamma_mode)
            beams = update_beams(channels, leakages, duals, betas, config, gamma_mode)

            wsr = weighted_sum_rate(channels, beams, config)
            res = float(np.max(stationarity_residuals(channels, beams, duals, config)))
            trace.iteration_index.append((outer, inner))
            trace.sum_rates.append(wsr)
            trace.bs_power_trace.append(bs_powers(beams))
            trace.residuals.append(res)
            if wsr < prev_inner_wsr * (1.0 - 1e-12):
                trace.non_monotone_steps += 1
            if wsr > best[0]:
                best = (wsr, beams.copy(), duals.copy())
            if abs(wsr - prev_inner_wsr) <= config.inner_tol * max(abs(prev_inner_wsr), 1e-12):
                trace.inner_converged.append(True)
                break
            prev_inner_wsr = wsr
        else:
            trace.inner_converged.append(False)

        trace.outer_sum_rates.append(wsr)
        if abs(wsr - prev_outer_wsr) <= config.outer_tol * max(abs(prev_outer_wsr), 1e-12):
            trace.converged_outer = True
            break
        prev_outer_wsr = wsr

    trace.best_sum_rate = best[0]
    trace.duals = best[2]
    return best[1], trace


# ---------------------------------------------------------------------------
# KKT diagnostics
# ---------------------------------------------------------------------------

def lagrangian_value(channels: ChannelState, beams: np.ndarray, duals: np.ndarray,
                     config: NetworkConfig) -> float:
    """Weighted sum-rate plus the dual-weighted power slack."""
    slack = config.Pmax - bs_powers(beams)
    return weighted_sum_rate(channels, beams, config) + float(np.dot(duals, slack))


def _amp_q_totals(channels: ChannelState, beams: np.ndarray, config: NetworkConfig):
    h = channels.normalized
    amps = np.einsum("jgna,juna->jugn", h.conj(), beams)   # h^H v per (j,u,g,n)
    p = np.abs(amps) ** 2
    total = np.einsum("jugn,jun->gn", p, config.assignment.astype(float))
    gids = np.arange(config.n_users)
    sig = p[gids // config.K, gids % config.K, gids, :]
    sinr = sig / (1.0 + total - sig)
    w = config.weights.reshape(config.n_users, config.N)
    active = config.assignment.reshape(config.n_users, config.N)
    q = np.where(active, w * sinr / (1.0 + total), 0.0)
    return amps, q, total


def lagrangian_gradient(channels: ChannelState, beams: np.ndarray, duals: np.ndarray,
                        config: NetworkConfig) -> np.ndarray:
    """Analytic gradient of the Lagrangian, shape (M, K, N, Nt).

    Convention: entry a holds d/dRe(v_a) + 1j * d/dIm(v_a), i.e. twice the
    conjugate Wirtinger derivative, which is what central finite differences
    of the real-valued Lagrangian reproduce component-wise.
    """
    h = channels.normalized
    amps, q, total = _amp_q_totals(channels, beams, config)
    # sum over victims: q_g' * (h_{m,g'}^H v_{m,k}) * h_{m,g'}
    full = np.einsum("gn,mkgn,mgna->mkna", q, amps, h)
    grad = np.zeros_like(beams)
    for m in range(config.M):
        for k in range(config.K):
            g = config.user_id(m, k)
            for n in range(config.N):
                if not config.is_active(m, k, n):
                    continue
                own = h[m, g, n] * amps[m, k, g, n]
                leak = full[m, k, n] - q[g, n] * own
                grad[m, k, n] = (2.0 / LN2) * (
                    config.weights[m, k, n] * own / (1.0 + total[g, n]) - leak
                ) - 2.0 * duals[m] * beams[m, k, n]
    return grad


def finite_difference_gradient(channels: ChannelState, beams: np.ndarray,
                               duals: np.ndarray, config: NetworkConfig,
                               step: float = 1e-5) -> np.ndarray:
    """Central finite differences of the Lagrangian over Re/Im of each beam entry."""
    grad = np.zeros_like(beams)
    for m in range(config.M):
        for k in range(config.K):
            for n in range(config.N):
                if not config.is_active(m, k, n):
                    continue
                for a in range(config.Nt):
                    for direction in (1.0, 1.0j):
                        vp = beams.copy()
                        vp[m, k, n, a] += step * direction
                        vm = beams.copy()
                        vm[m, k, n, a] -= step * direction
                        diff = (lagrangian_value(channels, vp, duals, config)
                                - lagrangian_value(channels, vm, duals, config))
                        grad[m, k, n, a] += direction * diff / (2.0 * step)
    return grad


def stationarity_residuals(channels: ChannelState, beams: np.ndarray,
                           duals: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Relative stationarity residual per triple, shape (M, K, N).

    || (L + lambda*ln2*I) v - w G v / (1 + v^H G v + i) || / ||v||
    with L and i recomputed from the given beams; zero where the beam is off.
    """
    h = channels.normalized
    amps, q, total = _amp_q_totals(channels, beams, config)
    full = np.einsum("gn,mkgn,mgna->mkna", q, amps, h)
    res = np.zeros((config.M, config.K, config.N))
    for m in range(config.M):
        for k in range(config.K):
            g = config.user_id(m, k)
            for n in range(config.N):
                if not config.is_active(m, k, n):
                    continue
                v = beams[m, k, n]
                norm = np.linalg.norm(v)
                if norm == 0.0:
                    continue
                own = h[m, g, n] * amps[m, k, g, n]
                leak = full[m, k, n] - q[g, n] * own
                lhs = leak + duals[m] * LN2 * v
                rhs = config.weights[m, k, n] * own / (1.0 + total[g, n])
                res[m, k, n] = np.linalg.norm(lhs - rhs) / norm
    return res


@dataclass
class KKTReport:
    """Residuals of the first-order optimality conditions."""
    max_power_violation: float
    min_dual: float
    max_complementary_slackness: float
    max_stationarity_residual: float
    grad_max_abs_dev: float
    grad_rel_gap: float


def kkt_report(channels: ChannelState, beams: np.ndarray, duals: np.ndarray,
               config: NetworkConfig, fd_step: float = 1e-5) -> KKTReport:
    """Evaluate all first-order conditions at (beams, duals).

    Includes a cross-check of the analytic Lagrangian gradient against
    central finite differences at step ``fd_step``.
    """
    powers = bs_powers(beams)
    violation = float(np.max(np.maximum(powers - config.Pmax, 0.0)))
    comp = float(np.max(np.abs(duals * (config.Pmax - powers))))
    res = float(np.max(stationarity_residuals(channels, beams, duals, config)))
    g_an = lagrangian_gradient(channels, beams, duals, config)
    g_fd = finite_difference_gradient(channels, beams, duals, config, step=fd_step)
    dev = np.abs(g_an - g_fd)
    rel = float(np.linalg.norm(g_an - g_fd) / max(np.linalg.norm(g_fd), 1e-300))
    return KKTReport(
        max_power_violation=violation,
        min_dual=float(np.min(duals)),
        max_complementary_slackness=comp,
        max_stationarity_residual=res,
        grad_max_abs_dev=float(dev.max()),
        grad_rel_gap=rel,
    )

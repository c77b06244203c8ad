"""Monte-Carlo experiment harness producing the figure data as CSV.

Five experiment kinds are supported:

  convergence  mean weighted sum-rate per outer iteration and algorithm
  snr_sweep    mean weighted sum-rate at convergence versus transmit SNR
  ref_sweep    mean weighted sum-rate of cb_refim versus reference count
  cdf          sorted per-user total rates (empirical CDF support)
  feedback     inter-BS feedback bits versus users-per-cell and antennas

Reproducibility: trial t derives its RNG state from
``numpy.random.SeedSequence((master_seed, t))``, so results are identical
whether trials run sequentially or across worker processes, and reruns with
the same config and seed produce byte-identical CSV (disable the header
timestamp comment for byte comparisons).
"""
from __future__ import annotations

import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import initializers, metrics, refim, solver
from .config import DEFAULTS, NetworkConfig
from .errors import CbsimError, ConfigurationError, InvalidStateError
from .network import (apply_noise, build_topology, draw_channels,
                      dump_channels_csv, dump_topology_csv)

EXPERIMENT_KINDS = ("convergence", "snr_sweep", "ref_sweep", "cdf", "feedback")
SOLVER_ALGOS = set(solver.ALGORITHMS)
BASELINE_ALGOS = set(initializers.INITIALIZERS)
DEFAULT_ALGOS = ("cm", "zf", "mslnr", "icbf", "icbf_wi", "cb_refim")


@dataclass
class ExperimentSpec:
    """What to run and where to write it."""
    kind: str
    trials: int = DEFAULTS["trials"]
    seed: int = DEFAULTS["seed"]
    gamma_db: tuple[float, ...] = (DEFAULTS["gamma_db"],)
    algos: tuple[str, ...] = DEFAULT_ALGOS
    init: str = DEFAULTS["init"]
    refs: int = DEFAULTS["refs"]
    workers: int = DEFAULTS["workers"]
    qbits: int = DEFAULTS["qbits"]
    k_list: tuple[int, ...] = tuple(range(2, 11))
    nt_list: tuple[int, ...] = (2, 3, 4)
    out: str = "results.csv"
    timestamp: bool = True
    dump_prefix: str | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(
                f"unknown experiment '{self.kind}', expected one of {EXPERIMENT_KINDS}")
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if not self.gamma_db:
            raise ConfigurationError("gamma_db list must be nonempty")
        if self.refs < 0:
            raise ConfigurationError(f"refs must be >= 0, got {self.refs}")
        for algo in self.algos:
            if algo not in SOLVER_ALGOS | BASELINE_ALGOS:
                raise ConfigurationError(f"unknown algorithm '{algo}'")
        if self.init not in initializers.INITIALIZERS:
            raise ConfigurationError(f"unknown initializer '{self.init}'")


def spec_from_values(kind: str, values: dict, overrides: dict | None = None) -> ExperimentSpec:
    merged = dict(values)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    kwargs = dict(kind=kind)
    for name, key in [("trials", "trials"), ("seed", "seed"), ("init", "init"),
                      ("refs", "refs"), ("workers", "workers"), ("qbits", "qbits"),
                      ("out", "out"), ("timestamp", "timestamp"),
                      ("k_list", "k_list"), ("nt_list", "nt_list"),
                      ("dump_prefix", "dump_prefix")]:
        if key in merged:
            kwargs[name] = merged[key]
    if "gamma_db" in merged:
        g = merged["gamma_db"]
        kwargs["gamma_db"] = tuple(g) if isinstance(g, (tuple, list)) else (float(g),)
    if "algos" in merged:
        kwargs["algos"] = tuple(merged["algos"])
    return ExperimentSpec(**kwargs)


def trial_seeds(master_seed: int, trial: int) -> tuple[int, int]:
    """Topology and channel seeds for one trial, mixed from the master seed."""
    ss = np.random.SeedSequence((master_seed, trial))
    s_topo, s_chan = ss.generate_state(2)
    return int(s_topo), int(s_chan)


@dataclass
class TrialResult:
    """Everything one channel realization contributes to the aggregates."""
    trial: int
    final_wsr: dict = field(default_factory=dict)        # (algo, gamma|refs) -> float
    outer_traces: dict = field(default_factory=dict)     # (algo, gamma) -> list[float]
    user_rates: dict = field(default_factory=dict)       # (algo, gamma) -> (M*K,) array
    max_power: float = 0.0


def _algo_beams(channels, config, algo, init_name, refs):
    if algo in BASELINE_ALGOS:
        return initializers.make_initial_beams(algo, channels, config), None
    beams0 = initializers.make_initial_beams(init_name, channels, config)
    beams, trace = solver.solve(channels, config, beams0, algo, ref_count=refs)
    return beams, trace


def _outer_series(trace, config: NetworkConfig, wsr_final: float) -> list[float]:
    """Sum-rate at the end of each outer iteration, continued when the solver
    stopped early so every algorithm reports L_out_max points."""
    series = list(trace.outer_sum_rates) if trace is not None else []
    if not series:
        series = [wsr_final]
    while len(series) < config.L_out_max:
        series.append(series[-1])
    return series[:config.L_out_max]


def run_solver_trial(config: NetworkConfig, spec: ExperimentSpec, trial: int,
                     ref_counts: tuple[int, ...] | None = None) -> TrialResult:
    """One channel realization: initialize, solve per algorithm and gamma.

    The raw fading/shadowing draw is shared across gamma points; only the
    noise normalization changes with the transmit SNR.
    """
    s_topo, s_chan = trial_seeds(spec.seed, trial)
    topology = build_topology(config, s_topo)
    raw = draw_channels(topology, config, s_chan)
    result = TrialResult(trial=trial)
    for gamma in spec.gamma_db:
        cfg = config.with_gamma_db(gamma)
        channels = apply_noise(topology, cfg, raw)
        if spec.dump_prefix and trial == 0 and gamma == spec.gamma_db[0]:
            dump_topology_csv(topology, f"{spec.dump_prefix}_topology.csv")
            dump_channels_csv(channels, f"{spec.dump_prefix}_channels.csv")
        for algo in spec.algos:
            if algo == "cb_refim" and ref_counts is not None:
                sweeps = ref_counts
            else:
                sweeps = (None,)
            for refs in sweeps:
                beams, trace = _algo_beams(channels, cfg, algo, spec.init,
                                           spec.refs if refs is None else refs)
                report = metrics.rate_report(channels, beams, cfg)
                key = (algo, gamma) if refs is None else (algo, gamma, refs)
                result.final_wsr[key] = report.weighted_sum_rate
                result.outer_traces[(algo, gamma)] = _outer_series(
                    trace, cfg, report.weighted_sum_rate)
                result.user_rates[(algo, gamma)] = report.user_rates.ravel()
                result.max_power = max(result.max_power, float(report.powers.max()))
    return result


def _run_trials(config: NetworkConfig, spec: ExperimentSpec,
                ref_counts: tuple[int, ...] | None = None) -> tuple[list[TrialResult], int]:
    """Run all trials (optionally in worker processes); order is by trial index.

    Failed trials are excluded from the aggregates, never retried; the
    exclusion count is reported so the statistics stay honest.
    """
    results: list[TrialResult | None] = [None] * spec.trials
    failures = 0
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            futures = {t: pool.submit(run_solver_trial, config, spec, t, ref_counts)
                       for t in range(spec.trials)}
            for t, fut in futures.items():
                try:
                    results[t] = fut.result()
                except CbsimError as exc:
                    failures += 1
                    print(f"warning: trial {t} failed: {exc}", file=sys.stderr)
    else:
        for t in range(spec.trials):
            try:
                results[t] = run_solver_trial(config, spec, t, ref_counts)
            except CbsimError as exc:
                failures += 1
                print(f"warning: trial {t} failed: {exc}", file=sys.stderr)
    kept = [r for r in results if r is not None]
    if not kept:
        raise InvalidStateError(f"every trial failed ({failures} errors)")
    return kept, failures


def _open_csv(spec: ExperimentSpec):
    path = Path(spec.out)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="")
    if spec.timestamp:
        fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
    return fh


def _run_convergence(config: NetworkConfig, spec: ExperimentSpec) -> Path:
    """Columns: algo, gamma_db, outer_iter (1-based), mean_sum_rate, trials."""
    results, failures = _run_trials(config, spec)
    with _open_csv(spec) as fh:
        writer = csv.writer(fh)
        writer.writerow(["algo", "gamma_db", "outer_iter", "mean_sum_rate", "trials"])
        for algo in spec.algos:
            for gamma in spec.gamma_db:
                series = np.array([r.outer_traces[(algo, gamma)] for r in results])
                mean = series.mean(axis=0)
                for it in range(mean.shape[0]):
                    writer.writerow([algo, f"{gamma:g}", it + 1,
                                     f"{mean[it]:.12g}", len(results)])
    _report(spec, len(results), failures)
    return Path(spec.out)


def _run_snr_sweep(config: NetworkConfig, spec: ExperimentSpec) -> Path:
    """Columns: algo, gamma_db, mean_sum_rate, std_sum_rate, trials."""
    results, failures = _run_trials(config, spec)
    with _open_csv(spec) as fh:
        writer = csv.writer(fh)
        writer.writerow(["algo", "gamma_db", "mean_sum_rate", "std_sum_rate", "trials"])
        for algo in spec.algos:
            for gamma in spec.gamma_db:
                vals = np.array([r.final_wsr[(algo, gamma)] for r in results])
                writer.writerow([algo, f"{gamma:g}", f"{vals.mean():.12g}",
                                 f"{vals.std():.12g}", len(results)])
    _report(spec, len(results), failures)
    return Path(spec.out)


def _run_ref_sweep(config: NetworkConfig, spec: ExperimentSpec) -> Path:
    """cb_refim swept over reference counts 0..MK-1 plus the requested
    baselines. Columns: algo, refs, gamma_db, mean_sum_rate, trials."""
    ref_counts = tuple(range(config.M * config.K))
    baselines = tuple(a for a in spec.algos if a != "cb_refim")
    sweep_spec = replace(spec, algos=baselines + ("cb_refim",))
    results, failures = _run_trials(config, sweep_spec, ref_counts=ref_counts)
    with _open_csv(spec) as fh:
        writer = csv.writer(fh)
        writer.writerow(["algo", "refs", "gamma_db", "mean_sum_rate", "trials"])
        for gamma in spec.gamma_db:
            for algo in baselines:
                vals = np.array([r.final_wsr[(algo, gamma)] for r in results])
                writer.writerow([algo, "", f"{gamma:g}", f"{vals.mean():.12g}",
                                 len(results)])
            for refs in ref_counts:
                vals = np.array([r.final_wsr[("cb_refim", gamma, refs)]
                                 for r in results])
                writer.writerow(["cb_refim", refs, f"{gamma:g}",
                                 f"{vals.mean():.12g}", len(results)])
    _report(spec, len(results), failures)
    return Path(spec.out)


def _run_cdf(config: NetworkConfig, spec: ExperimentSpec) -> Path:
    """Columns: algo, gamma_db, user_rate, ecdf (sorted ascending per algo)."""
    results, failures = _run_trials(config, spec)
    with _open_csv(spec) as fh:
        writer = csv.writer(fh)
        writer.writerow(["algo", "gamma_db", "user_rate", "ecdf"])
        for algo in spec.algos:
            for gamma in spec.gamma_db:
                samples = np.sort(np.concatenate(
                    [r.user_rates[(algo, gamma)] for r in results]))
                n = samples.size
                for idx, rate in enumerate(samples):
                    writer.writerow([algo, f"{gamma:g}", f"{rate:.12g}",
                                     f"{(idx + 1) / n:.8g}"])
    _report(spec, len(results), failures)
    return Path(spec.out)


def feedback_table(config: NetworkConfig, spec: ExperimentSpec) -> list[dict]:
    """Feedback bits per (algo, K, Nt).

    The full algorithm's count is deterministic. The reference-user variant
    depends on which references the channel draw selects, so its bit count is
    averaged over ``spec.trials`` independent realizations (reference
    selection only needs channels, no solving).
    """
    rows = []
    for nt in spec.nt_list:
        for k in spec.k_list:
            cfg = replace(config, K=int(k), Nt=int(nt), weights=None, assignment=None)
            icbf_bits = refim.feedback_bits(cfg, "icbf", qbits=spec.qbits)
            totals = []
            for t in range(spec.trials):
                s_topo, s_chan = trial_seeds(spec.seed, t)
                topology = build_topology(cfg, s_topo)
                channels = apply_noise(topology, cfg, draw_channels(topology, cfg, s_chan))
                refmap = refim.reference_map(channels, cfg, spec.refs)
                counts = refim.out_of_cell_reference_counts(cfg, refmap)
                totals.append(refim.feedback_bits(cfg, "cb_refim", counts,
                                                  qbits=spec.qbits))
            rows.append(dict(K=int(k), Nt=int(nt), icbf_bits=icbf_bits,
                             cb_refim_bits=float(np.mean(totals))))
    return rows


def _run_feedback(config: NetworkConfig, spec: ExperimentSpec) -> Path:
    """Columns: algo, K, Nt, bits (cb_refim bits are trial means)."""
    rows = feedback_table(config, spec)
    with _open_csv(spec) as fh:
        writer = csv.writer(fh)
        writer.writerow(["algo", "K", "Nt", "bits"])
        for row in rows:
            writer.writerow(["icbf", row["K"], row["Nt"], row["icbf_bits"]])
        for row in rows:
            writer.writerow(["cb_refim", row["K"], row["Nt"],
                             f"{row['cb_refim_bits']:.6g}"])
    _report(spec, spec.trials, 0)
    return Path(spec.out)


def _report(spec: ExperimentSpec, used: int, failures: int) -> None:
    msg = f"{spec.kind}: {used} trials -> {spec.out}"
    if failures:
        msg += f" ({failures} trials excluded after errors)"
    print(msg)


_RUNNERS = {
    "convergence": _run_convergence,
    "snr_sweep": _run_snr_sweep,
    "ref_sweep": _run_ref_sweep,
    "cdf": _run_cdf,
    "feedback": _run_feedback,
}


def run_experiment(config: NetworkConfig, spec: ExperimentSpec) -> Path:
    """Dispatch one experiment; returns the written CSV path."""
    return _RUNNERS[spec.kind](config, spec)

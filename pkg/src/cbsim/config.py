"""Network configuration and flat key=value config-file parsing.

All powers are linear; dB enters only through ``gamma_db`` at this boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

#: Reference scenario: 3 coordinated cells, 3 subchannels, 3 users per cell,
#: 3 transmit antennas, transmit SNR 30 dB.
DEFAULTS = dict(M=3, N=3, K=3, Nt=3, pmax=1.0, gamma_db=30.0,
                trials=100, seed=0, refs=1, qbits=8, workers=1,
                init="mslnr")


@dataclass
class NetworkConfig:
    """Static description of one coordinated cluster.

    M:  coordinated base stations (1..3 supported by the layout generator)
    N:  OFDMA subchannels
    K:  users per cell
    Nt: transmit antennas per BS
    Pmax: per-BS power budget (linear, identical for all BSs)
    gamma_db: transmit SNR gamma = Pmax / sigma^2 in dB
    weights: per-(cell, user, subchannel) rate weights, shape (M, K, N);
             default 1/(M*N) which turns the objective into plain sum-rate
    assignment: boolean activity mask, shape (M, K, N); default all-active
                (every user of a cell shares every subchannel via SDMA)
    """
    M: int = 3
    N: int = 3
    K: int = 3
    Nt: int = 3
    Pmax: float = 1.0
    gamma_db: float = 30.0
    weights: np.ndarray | None = None
    assignment: np.ndarray | None = None
    L_in_max: int = 40
    L_out_max: int = 4
    lambda_min: float = 1e-10
    inner_tol: float = 1e-6   # relative weighted-sum-rate change, inner loop
    outer_tol: float = 1e-4   # relative weighted-sum-rate change, outer loop

    def __post_init__(self):
        for name in ("M", "N", "K", "Nt"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if self.Pmax <= 0:
            raise ConfigurationError(f"Pmax must be > 0, got {self.Pmax!r}")
        if self.lambda_min <= 0:
            raise ConfigurationError(f"lambda_min must be > 0, got {self.lambda_min!r}")
        if self.L_in_max < 1 or self.L_out_max < 1:
            raise ConfigurationError("iteration caps must be positive")
        if self.weights is None:
            self.weights = np.full((self.M, self.K, self.N), 1.0 / (self.M * self.N))
        else:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (self.M, self.K, self.N):
                raise ConfigurationError(
                    f"weights must have shape {(self.M, self.K, self.N)}, "
                    f"got {self.weights.shape}")
            if np.any(self.weights < 0):
                raise ConfigurationError("weights must be nonnegative")
        if self.assignment is None:
            self.assignment = np.ones((self.M, self.K, self.N), dtype=bool)
        else:
            self.assignment = np.asarray(self.assignment, dtype=bool)
            if self.assignment.shape != (self.M, self.K, self.N):
                raise ConfigurationError(
                    f"assignment must have shape {(self.M, self.K, self.N)}, "
                    f"got {self.assignment.shape}")

    @property
    def gamma_lin(self) -> float:
        return 10.0 ** (self.gamma_db / 10.0)

    @property
    def sigma2(self) -> float:
        """Thermal noise power sigma^2 = Pmax / gamma."""
        return self.Pmax / self.gamma_lin

    @property
    def n_users(self) -> int:
        """Total user count across the cluster (global user index runs 0..MK-1)."""
        return self.M * self.K

    def user_id(self, m: int, k: int) -> int:
        """Global user index of user k served by cell m."""
        return m * self.K + k

    def is_active(self, m: int, k: int, n: int) -> bool:
        return bool(self.assignment[m, k, n])

    def with_gamma_db(self, gamma_db: float) -> "NetworkConfig":
        return replace(self, gamma_db=float(gamma_db),
                       weights=self.weights.copy(),
                       assignment=self.assignment.copy())


# ---------------------------------------------------------------------------
# key=value config files
# ---------------------------------------------------------------------------

def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip() != "")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip() != "")


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(tok.strip() for tok in text.split(",") if tok.strip() != "")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


#: key -> converter for the flat config-file format. Unknown keys are rejected.
CONFIG_SCHEMA = {
    "M": int,
    "N": int,
    "K": int,
    "Nt": int,
    "pmax": float,
    "gamma_db": _parse_float_list,
    "L_in_max": int,
    "L_out_max": int,
    "lambda_min": float,
    "inner_tol": float,
    "outer_tol": float,
    "trials": int,
    "seed": int,
    "algos": _parse_str_list,
    "init": str,
    "refs": int,
    "workers": int,
    "qbits": int,
    "k_list": _parse_int_list,
    "nt_list": _parse_int_list,
    "out": str,
    "timestamp": _parse_bool,
}


def parse_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` text file into typed values.

    Lines starting with ``#`` and blank lines are ignored. Unknown keys and
    malformed values raise :class:`ConfigurationError` naming the key.
    """
    values: dict = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigurationError(f"{path}:{lineno}: unknown config key '{key}'")
        try:
            values[key] = CONFIG_SCHEMA[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(
                f"{path}:{lineno}: malformed value for key '{key}': {value!r} ({exc})")
    return values


def network_config_from_values(values: dict, gamma_db: float | None = None) -> NetworkConfig:
    """Build a NetworkConfig from parsed config values; defaults fill the gaps."""
    gammas = values.get("gamma_db", (DEFAULTS["gamma_db"],))
    if gamma_db is None:
        gamma_db = gammas[0]
    kwargs = dict(
        M=values.get("M", DEFAULTS["M"]),
        N=values.get("N", DEFAULTS["N"]),
        K=values.get("K", DEFAULTS["K"]),
        Nt=values.get("Nt", DEFAULTS["Nt"]),
        Pmax=values.get("pmax", DEFAULTS["pmax"]),
        gamma_db=float(gamma_db),
    )
    for key in ("L_in_max", "L_out_max", "lambda_min", "inner_tol", "outer_tol"):
        if key in values:
            kwargs[key] = values[key]
    return NetworkConfig(**kwargs)

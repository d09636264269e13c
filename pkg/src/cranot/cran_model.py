"""Radio and queueing model for a single large C-RAN cell.

Geometry and powers determine per-pair exclusive-service download rates
through a power-law path gain and an interference-limited SINR; demands
and an association matrix then determine per-station utilisation and, via
a processor-sharing queue, the average job completion time.

Rates depend only on geometry, never on the association, so a rate matrix
can be computed once per scenario and reused across policies.  Interference
sums use math.fsum, which is correctly rounded and therefore independent of
station ordering: permuting stations permutes rate columns exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Device",
    "InfeasibleLoadError",
    "LoadVector",
    "RRH",
    "RadioEnvironment",
    "Scenario",
    "avg_completion_time",
    "avg_jobs",
    "check_association",
    "distance_matrix",
    "load",
    "path_gain",
    "rate_matrix",
    "sinr",
    "sinr_matrix",
]

DEFAULT_BANDWIDTH = 1e7  # Hz
DEFAULT_NOISE = 1e-13  # W
DEFAULT_PATHLOSS_EXPONENT = 4.0
DEFAULT_MIN_DISTANCE = 1.0  # m; clamps the path-gain singularity
DEFAULT_MU = 1.0  # jobs per traffic unit


class InfeasibleLoadError(Exception):
    """A station is saturated (utilisation >= 1): delays are undefined."""

    def __init__(self, rrh_indices):
        self.rrh_indices = tuple(int(i) for i in rrh_indices)
        super().__init__(f"saturated RRHs (load >= 1): {self.rrh_indices}")


@dataclass(frozen=True)
class RadioEnvironment:
    """Cell-wide radio and job-size constants."""

    bandwidth: float = DEFAULT_BANDWIDTH
    noise: float = DEFAULT_NOISE
    pathloss_exponent: float = DEFAULT_PATHLOSS_EXPONENT
    min_distance: float = DEFAULT_MIN_DISTANCE
    mu: float = DEFAULT_MU

    def __post_init__(self) -> None:
        for name in ("bandwidth", "noise", "min_distance", "mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 2.0 <= self.pathloss_exponent <= 6.0:
            raise ValueError(
                f"pathloss_exponent must lie in [2, 6], got {self.pathloss_exponent}"
            )


@dataclass(frozen=True)
class Device:
    x: float
    y: float
    demand: float  # traffic units per second

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("device location must be finite")
        if not self.demand > 0:
            raise ValueError(f"device demand must be positive, got {self.demand}")


@dataclass(frozen=True)
class RRH:
    x: float
    y: float
    power: float  # W

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("RRH location must be finite")
        if not self.power > 0:
            raise ValueError(f"RRH power must be positive, got {self.power}")


@dataclass(frozen=True)
class Scenario:
    devices: tuple[Device, ...]
    rrhs: tuple[RRH, ...]
    env: RadioEnvironment

    def __post_init__(self) -> None:
        if len(self.devices) < 1 or len(self.rrhs) < 1:
            raise ValueError("scenario needs at least one device and one RRH")
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "rrhs", tuple(self.rrhs))

    @property
    def num_devices(self) -> int:
        return len(self.devices)

    @property
    def num_rrhs(self) -> int:
        return len(self.rrhs)

    def device_xy(self) -> np.ndarray:
        return np.array([(d.x, d.y) for d in self.devices])

    def rrh_xy(self) -> np.ndarray:
        return np.array([(r.x, r.y) for r in self.rrhs])

    def demands(self) -> np.ndarray:
        return np.array([d.demand for d in self.devices])

    def powers(self) -> np.ndarray:
        return np.array([r.power for r in self.rrhs])

    def with_demands(self, demands) -> "Scenario":
        demands = np.asarray(demands, dtype=float)
        if demands.shape != (self.num_devices,):
            raise ValueError("demand vector length must match device count")
        devs = tuple(
            Device(d.x, d.y, float(lam)) for d, lam in zip(self.devices, demands)
        )
        return Scenario(devices=devs, rrhs=self.rrhs, env=self.env)


@dataclass(frozen=True)
class LoadVector:
    """Per-station utilisation; feasible means every entry is below 1."""

    loads: np.ndarray
    feasible: bool

    @property
    def violating(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.loads >= 1.0))


def path_gain(dist, env: RadioEnvironment):
    """Power-law gain max(d, d_min)^(-alpha); scalar or array distances."""
    d = np.maximum(np.asarray(dist, dtype=float), env.min_distance)
    g = d ** -env.pathloss_exponent
    return float(g) if np.isscalar(dist) else g


def distance_matrix(scenario: Scenario) -> np.ndarray:
    diff = scenario.device_xy()[:, None, :] - scenario.rrh_xy()[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def _received_power(scenario: Scenario) -> np.ndarray:
    gains = path_gain(distance_matrix(scenario), scenario.env)
    return scenario.powers()[None, :] * gains


def sinr_matrix(scenario: Scenario) -> np.ndarray:
    """SINR of every (device, RRH) pair under full interference."""
    pg = _received_power(scenario)
    # fsum keeps the interference totals independent of summation order
    totals = np.array([math.fsum(row) for row in pg])
    interference = totals[:, None] - pg
    return pg / (interference + scenario.env.noise)


def sinr(device_index: int, rrh_index: int, scenario: Scenario) -> float:
    """SINR of one pair; matches sinr_matrix entrywise."""
    pg = _received_power(scenario)[device_index]
    total = math.fsum(pg)
    own = pg[rrh_index]
    return float(own / (total - own + scenario.env.noise))


def rate_matrix(scenario: Scenario) -> np.ndarray:
    """Exclusive-service rates W * log(1 + SINR), natural logarithm."""
    return scenario.env.bandwidth * np.log1p(sinr_matrix(scenario))


def check_association(assoc, num_devices: int, num_rrhs: int, tol: float = 1e-9) -> np.ndarray:
    """Validate a row-stochastic association matrix and return it as floats."""
    assoc = np.asarray(assoc, dtype=float)
    if assoc.shape != (num_devices, num_rrhs):
        raise ValueError(
            f"association shape {assoc.shape} != ({num_devices}, {num_rrhs})"
        )
    if np.any(assoc < -tol) or np.any(assoc > 1 + tol):
        raise ValueError("association entries must lie in [0, 1]")
    gaps = np.abs(assoc.sum(axis=1) - 1.0)
    if gaps.max() > tol:
        raise ValueError(f"association rows must sum to 1 (worst gap {gaps.max():.3e})")
    return assoc


def load(assoc, scenario: Scenario, rates: np.ndarray) -> LoadVector:
    """Utilisation rho_j = sum_i (lambda_i / (mu R_ij)) pi_ij per station.

    Saturated stations are reported, not rejected; callers that need
    delays must check ``feasible`` themselves.
    """
    assoc = np.asarray(assoc, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if assoc.shape != rates.shape:
        raise ValueError(f"association shape {assoc.shape} != rates shape {rates.shape}")
    per_unit = scenario.demands()[:, None] / (scenario.env.mu * rates)
    loads = (assoc * per_unit).sum(axis=0)
    return LoadVector(loads=loads, feasible=bool(np.all(loads < 1.0)))


def avg_jobs(rho: float) -> float:
    """Mean number of jobs rho/(1-rho) in a processor-sharing queue."""
    if rho < 0:
        raise ValueError(f"utilisation must be nonnegative, got {rho}")
    if rho >= 1:
        raise InfeasibleLoadError(())
    return rho / (1.0 - rho)


def avg_completion_time(assoc, scenario: Scenario, rates: np.ndarray) -> float:
    """Mean job completion time per device under processor sharing.

    Averages sum_j pi_ij / (mu R_ij (1 - rho_j)) over devices.  Raises
    InfeasibleLoadError naming the saturated stations when any rho_j >= 1.
    """
    assoc = np.asarray(assoc, dtype=float)
    lv = load(assoc, scenario, rates)
    if not lv.feasible:
        raise InfeasibleLoadError(lv.violating)
    env = scenario.env
    per_pair = assoc / (env.mu * rates * (1.0 - lv.loads)[None, :])
    return float(per_pair.sum() / scenario.num_devices)

"""Association policies: maxSINR baseline, transport-based rules, and the
adaptive marginal-learning loop.

The transport rules pick a cost (Euclidean distance or incurred load per
unit traffic 1/(mu R)) and a station-side marginal (equal traffic shares or
the traffic the maxSINR rule would induce), ship the device demands
accordingly, and read the association off the plan as pi_ij = x_ij / lambda_i.

The adaptive loop starts from equal shares and, each round, shaves a fixed
amount of traffic off the currently most-loaded station, spreading it evenly
over the rest, until the load spread is small.  It returns the best
feasible iterate by mean completion time, not the last one.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np

from .cran_model import Scenario, avg_completion_time, load
from .exact_oracle import exact_ot
from .ot_core import (
    SinkhornConfig,
    SolveReport,
    marginal_residual,
    round_to_feasible,
    sinkhorn,
)

__all__ = [
    "AdaptiveConfig",
    "AdaptiveInfeasibleError",
    "AdaptiveResult",
    "AdaptiveRound",
    "CostMode",
    "MarginalMode",
    "NonConvergedError",
    "OTAssociation",
    "adaptive_sinkhorn",
    "best_arc_cost_scale",
    "max_sinr_association",
    "ot_association",
    "ot_cost_matrix",
    "ot_marginals",
    "rrh_traffic",
    "scale_demands_to_max_load",
]


class CostMode(str, enum.Enum):
    EUCLIDEAN = "euclid"
    INVERSE_RATE = "invrate"


class MarginalMode(str, enum.Enum):
    EQUAL_SHARE = "equal"
    MAXSINR_TRAFFIC = "maxsinr"


class NonConvergedError(RuntimeError):
    """Scaling solve stopped at max_iters; the report rides along."""

    def __init__(self, report: SolveReport):
        self.report = report
        super().__init__(
            f"sinkhorn stopped after {report.iterations} iterations at residual "
            f"{report.final_residual:.3e}"
        )


def max_sinr_association(rates) -> np.ndarray:
    """Each device fully on its highest-rate station (ties to lowest index)."""
    rates = np.asarray(rates, dtype=float)
    m, n = rates.shape
    assoc = np.zeros((m, n))
    assoc[np.arange(m), rates.argmax(axis=1)] = 1.0
    return assoc


def rrh_traffic(assoc, demands) -> np.ndarray:
    """Traffic each station attracts under an association."""
    assoc = np.asarray(assoc, dtype=float)
    demands = np.asarray(demands, dtype=float)
    return assoc.T @ demands


def ot_cost_matrix(scenario: Scenario, rates: np.ndarray, mode: CostMode) -> np.ndarray:
    if mode == CostMode.EUCLIDEAN:
        diff = scenario.device_xy()[:, None, :] - scenario.rrh_xy()[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))
    if mode == CostMode.INVERSE_RATE:
        return 1.0 / (scenario.env.mu * np.asarray(rates, dtype=float))
    raise ValueError(f"unknown cost mode {mode!r}")


def ot_marginals(scenario: Scenario, rates: np.ndarray, mode: MarginalMode):
    """Device-side marginal p = demands and the chosen station-side q."""
    p = scenario.demands()
    total = p.sum()
    n = scenario.num_rrhs
    if mode == MarginalMode.EQUAL_SHARE:
        q = np.full(n, total / n)
        q *= total / q.sum()  # make the masses match exactly
    elif mode == MarginalMode.MAXSINR_TRAFFIC:
        q = rrh_traffic(max_sinr_association(rates), p)
    else:
        raise ValueError(f"unknown marginal mode {mode!r}")
    return p, q


def best_arc_cost_scale(C) -> float:
    """Mean over devices of their cheapest arc; a robust cost scale.

    Inverse-rate costs span many orders of magnitude across pairs, so the
    plain matrix mean is dominated by useless far arcs.  Regularisation
    strengths are better expressed relative to this scale.
    """
    C = np.asarray(C, dtype=float)
    return float(C.min(axis=1).mean())


@dataclass
class OTAssociation:
    association: np.ndarray
    plan: np.ndarray
    report: SolveReport


def ot_association(
    scenario: Scenario,
    rates: np.ndarray,
    cost_mode: CostMode,
    marginal_mode: MarginalMode,
    config: SinkhornConfig | None = None,
    *,
    solver: str = "sinkhorn",
    epsilon_scale: float = 1e-3,
    residual_tol: float = 1e-5,
    max_iters: int = 100_000,
    strict: bool = True,
) -> OTAssociation:
    """Transport-based association for one (cost, marginal) choice.

    With ``solver="sinkhorn"`` the plan is solved approximately, projected
    onto the exact marginals, and divided by demands row-wise; if no
    ``config`` is given, epsilon is set to ``epsilon_scale`` times the mean
    best-arc cost.  ``solver="exact"`` substitutes the LP oracle (small
    instances only).  With ``strict`` a non-converged solve raises
    NonConvergedError carrying the report.
    """
    C = ot_cost_matrix(scenario, rates, cost_mode)
    p, q = ot_marginals(scenario, rates, marginal_mode)

    if solver == "exact":
        t0 = time.perf_counter()
        sol = exact_ot(C, p, q)
        plan = sol.plan
        report = SolveReport(
            method="exact",
            iterations=sol.pivots,
            final_residual=marginal_residual(plan, p, q),
            cost=sol.optimal_cost,
            wall_time_ms=(time.perf_counter() - t0) * 1e3,
            converged=True,
        )
    elif solver == "sinkhorn":
        if config is None:
            config = SinkhornConfig(
                epsilon=epsilon_scale * best_arc_cost_scale(C),
                residual_tol=residual_tol,
                max_iters=max_iters,
            )
        result = sinkhorn(C, p, q, config)
        report = result.report
        if strict and not report.converged:
            raise NonConvergedError(report)
        plan = round_to_feasible(result.plan, p, q)
    else:
        raise ValueError(f"unknown solver {solver!r}")

    association = plan / p[:, None]
    return OTAssociation(association=association, plan=plan, report=report)


@dataclass
class AdaptiveConfig:
    """Parameters of the marginal-learning loop.

    ``delta`` is the traffic shaved off the most-loaded station per round
    (traffic units); ``epsilon`` the regularisation strength in cost units.
    Use ``for_scenario`` to derive both from a scenario.
    """

    delta: float
    epsilon: float
    max_rounds: int = 200
    stop_spread: float = 0.02
    residual_tol: float = 1e-4
    max_iters: int = 50_000

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if not self.stop_spread > 0:
            raise ValueError(f"stop_spread must be positive, got {self.stop_spread}")

    @classmethod
    def for_scenario(
        cls,
        scenario: Scenario,
        rates: np.ndarray,
        *,
        delta_frac: float = 0.02,
        epsilon_scale: float = 1e-3,
        **kwargs,
    ) -> "AdaptiveConfig":
        """Defaults: delta = 2% of total demand, epsilon relative to the
        mean best-arc cost of the inverse-rate cost matrix."""
        C = ot_cost_matrix(scenario, rates, CostMode.INVERSE_RATE)
        return cls(
            delta=delta_frac * float(scenario.demands().sum()),
            epsilon=epsilon_scale * best_arc_cost_scale(C),
            **kwargs,
        )


@dataclass
class AdaptiveRound:
    round: int
    q: np.ndarray  # station-side marginal used this round
    loads: np.ndarray
    spread: float  # max load - min load
    objective: float | None  # mean completion time, None when infeasible
    feasible: bool
    report: SolveReport


@dataclass
class AdaptiveResult:
    association: np.ndarray
    best_round: int
    trace: list[AdaptiveRound]


class AdaptiveInfeasibleError(Exception):
    """Every iterate saturated some station; the trace rides along."""

    def __init__(self, trace: list[AdaptiveRound]):
        self.trace = trace
        super().__init__(f"no feasible iterate in {len(trace)} rounds")


def adaptive_sinkhorn(
    scenario: Scenario, rates: np.ndarray, config: AdaptiveConfig
) -> AdaptiveResult:
    """Learn the station-side marginal by shaving load off the hottest station.

    Starts from equal traffic shares with the inverse-rate cost, solves a
    transport problem per round, and moves ``delta`` units of marginal away
    from the most-loaded station (clamped at zero), spreading them evenly
    over the others.  Stops when the load spread drops to ``stop_spread``
    or after ``max_rounds``; returns the feasible iterate with the best
    mean completion time and the full per-round trace.
    """
    n = scenario.num_rrhs
    if n < 2:
        raise ValueError("adaptive loop needs at least two RRHs")
    rates = np.asarray(rates, dtype=float)
    C = ot_cost_matrix(scenario, rates, CostMode.INVERSE_RATE)
    p = scenario.demands()
    total = float(p.sum())
    q = np.full(n, total / n)
    q *= total / q.sum()

    sink_cfg = SinkhornConfig(
        epsilon=config.epsilon,
        residual_tol=config.residual_tol,
        max_iters=config.max_iters,
    )
    trace: list[AdaptiveRound] = []
    best_round = -1
    best_obj = np.inf
    best_assoc: np.ndarray | None = None

    for k in range(1, config.max_rounds + 1):
        result = sinkhorn(C, p, q, sink_cfg)
        plan = round_to_feasible(result.plan, p, q)
        assoc = plan / p[:, None]
        lv = load(assoc, scenario, rates)
        if lv.feasible:
            objective = avg_completion_time(assoc, scenario, rates)
        else:
            objective = None
        spread = float(lv.loads.max() - lv.loads.min())
        trace.append(
            AdaptiveRound(
                round=k,
                q=q.copy(),
                loads=lv.loads.copy(),
                spread=spread,
                objective=objective,
                feasible=lv.feasible,
                report=result.report,
            )
        )
        if objective is not None and objective < best_obj:
            best_obj = objective
            best_round = k
            best_assoc = assoc
        if spread <= config.stop_spread:
            break
        j_star = int(np.argmax(lv.loads))  # ties to lowest index
        removed = min(config.delta, q[j_star])  # marginals must stay nonnegative
        q[j_star] -= removed
        others = np.arange(n) != j_star
        q[others] += removed / (n - 1)

    if best_assoc is None:
        raise AdaptiveInfeasibleError(trace)
    return AdaptiveResult(association=best_assoc, best_round=best_round, trace=trace)


def scale_demands_to_max_load(
    scenario: Scenario, rates: np.ndarray, target_max_load: float
) -> Scenario:
    """Rescale all demands so the maxSINR peak utilisation hits a target.

    Rates depend only on geometry, so scaling demands keeps the supplied
    rate matrix valid for the returned scenario.
    """
    if not 0 < target_max_load:
        raise ValueError(f"target_max_load must be positive, got {target_max_load}")
    lv = load(max_sinr_association(rates), scenario, rates)
    peak = float(lv.loads.max())
    if peak <= 0:
        raise ValueError("maxSINR load is zero; cannot calibrate demands")
    return scenario.with_demands(scenario.demands() * (target_max_load / peak))

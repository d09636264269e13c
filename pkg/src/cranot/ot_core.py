"""Entropic-regularised optimal transport solved by Sinkhorn scaling.

The regularised problem

    min_x  sum_ij C_ij x_ij + eps * sum_ij x_ij (log x_ij - 1)

over couplings x with row sums p and column sums q has a unique optimum of
the form x_ij = a_i * xi_ij * b_j with Gibbs kernel xi = exp(-C/eps).
Alternately rescaling rows and columns to match the marginals yields the
classic matrix-scaling iteration.  For small eps the kernel underflows, so
the same iteration is also available on the dual (log-domain) potentials
and is entered automatically when needed.

Stopping uses the total absolute marginal residual divided by the total
mass of ``p``; a tolerance of 0.01 means the plan's row plus column sums
are off by 1% of the transported mass in L1.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MassMismatchError",
    "SinkhornConfig",
    "SinkhornResult",
    "SolveReport",
    "as_cost_matrix",
    "as_marginal",
    "entropy",
    "gibbs_kernel",
    "kl_divergence",
    "marginal_residual",
    "round_to_feasible",
    "sinkhorn",
    "transport_cost",
]

# Accepted relative mass mismatch between p and q before raising; anything
# smaller is absorbed by rescaling q exactly.
MASS_RTOL = 1e-9
# Scaling denominators below this force the log-domain path.
UNDERFLOW_FLOOR = 1e-300
# Log domain whenever eps < LOG_DOMAIN_FACTOR * max(C).
LOG_DOMAIN_FACTOR = 0.02


class MassMismatchError(ValueError):
    """Total masses of the two marginals differ beyond tolerance."""


class _NeedsLogDomain(Exception):
    """Internal: standard-domain update underflowed, restart in log domain."""


@dataclass
class SinkhornConfig:
    """Knobs for one scaling solve.

    ``epsilon`` is the regularisation strength in cost units and
    ``residual_tol`` the normalised marginal residual at which to stop.
    ``log_domain`` forces the stabilised path; it is also entered
    automatically for small epsilon or on underflow.
    """

    epsilon: float
    residual_tol: float = 1e-2
    max_iters: int = 10_000
    log_domain: bool = False
    track_history: bool = False

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.residual_tol > 0:
            raise ValueError(f"residual_tol must be positive, got {self.residual_tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class SolveReport:
    """What a solve did: accuracy reached, iteration count, cost, timing."""

    method: str
    iterations: int
    final_residual: float
    cost: float
    wall_time_ms: float
    converged: bool
    escalated: bool = False
    residual_history: list[float] | None = None


@dataclass
class SinkhornResult:
    """Transport plan plus the scaling vectors that factor it.

    The plan satisfies plan = a[:, None] * exp(-C/eps) * b[None, :]; rows
    or columns excised for zero marginal entries carry a = 0 / b = 0.
    """

    plan: np.ndarray
    a: np.ndarray
    b: np.ndarray
    report: SolveReport


def as_marginal(w, name: str = "marginal") -> np.ndarray:
    """Validate and return a marginal as a float vector (>= 0, mass > 0)."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(w < 0):
        raise ValueError(f"{name} contains negative entries")
    if w.sum() <= 0:
        raise ValueError(f"{name} has no mass")
    return w


def as_cost_matrix(C) -> np.ndarray:
    """Validate and return a cost matrix as a float array (finite, >= 0)."""
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ValueError(f"cost matrix must be 2-d, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix contains non-finite entries")
    if np.any(C < 0):
        raise ValueError("cost matrix contains negative entries")
    return C


def _check_dims(C: np.ndarray, p: np.ndarray, q: np.ndarray) -> None:
    if C.shape != (p.shape[0], q.shape[0]):
        raise ValueError(
            f"cost matrix shape {C.shape} does not match marginals "
            f"({p.shape[0]}, {q.shape[0]})"
        )


def equalize_masses(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Return q rescaled to the mass of p; raise if they differ too much."""
    mp, mq = float(p.sum()), float(q.sum())
    if abs(mp - mq) > MASS_RTOL * mp:
        raise MassMismatchError(
            f"marginal masses differ: {mp!r} vs {mq!r} "
            f"(relative gap {abs(mp - mq) / mp:.3e})"
        )
    return q * (mp / mq)


def gibbs_kernel(C, epsilon: float) -> np.ndarray:
    """Entrywise exp(-C/epsilon); entries lie in (0, 1] for C >= 0."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    C = as_cost_matrix(C)
    return np.exp(-C / epsilon)


def transport_cost(plan, C) -> float:
    """Total cost <C, plan> of a coupling."""
    plan = np.asarray(plan, dtype=float)
    C = np.asarray(C, dtype=float)
    if plan.shape != C.shape:
        raise ValueError(f"plan shape {plan.shape} != cost shape {C.shape}")
    return float(np.sum(C * plan))


def entropy(plan) -> float:
    """-sum x (log x - 1) with the 0 log 0 = 0 convention."""
    x = np.asarray(plan, dtype=float)
    pos = x[x > 0]
    return float(-np.sum(pos * (np.log(pos) - 1.0)))


def kl_divergence(plan, kernel) -> float:
    """sum x (log(x/k) - 1), the divergence driving the scaling iteration.

    Equals transport_cost(plan, C)/eps - entropy(plan) when the kernel is
    gibbs_kernel(C, eps).
    """
    x = np.asarray(plan, dtype=float)
    k = np.asarray(kernel, dtype=float)
    if x.shape != k.shape:
        raise ValueError(f"plan shape {x.shape} != kernel shape {k.shape}")
    if np.any(k <= 0):
        raise ValueError("kernel entries must be strictly positive")
    mask = x > 0
    return float(np.sum(x[mask] * (np.log(x[mask] / k[mask]) - 1.0)))


def marginal_residual(plan, p, q) -> float:
    """L1 violation of both marginals, normalised by the mass of p."""
    plan = np.asarray(plan, dtype=float)
    p = as_marginal(p, "p")
    q = as_marginal(q, "q")
    _check_dims(plan, p, q)
    row_gap = np.abs(plan.sum(axis=1) - p).sum()
    col_gap = np.abs(plan.sum(axis=0) - q).sum()
    return float((row_gap + col_gap) / p.sum())


def round_to_feasible(plan, p, q) -> np.ndarray:
    """Project an almost-feasible plan onto the exact marginals.

    Rows are scaled down to at most p, columns to at most q, and the
    remaining deficit is added back as a rank-one term proportional to the
    row and column deficits.  The output is nonnegative, matches both
    marginals to machine precision, and moves at most twice the input's
    L1 marginal violation.
    """
    X = np.array(plan, dtype=float)
    p = as_marginal(p, "p")
    q = as_marginal(q, "q")
    _check_dims(X, p, q)
    if np.any(X < 0):
        raise ValueError("plan contains negative entries")
    q = equalize_masses(p, q)

    r = X.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        row_scale = np.where(r > 0, np.minimum(p / np.where(r > 0, r, 1.0), 1.0), 1.0)
    X *= row_scale[:, None]
    c = X.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        col_scale = np.where(c > 0, np.minimum(q / np.where(c > 0, c, 1.0), 1.0), 1.0)
    X *= col_scale[None, :]

    err_r = np.maximum(p - X.sum(axis=1), 0.0)
    err_c = np.maximum(q - X.sum(axis=0), 0.0)
    total_c = err_c.sum()
    if err_r.sum() > 0 and total_c > 0:
        X += np.outer(err_r, err_c) / total_c
    return X


def sinkhorn(C, p, q, config: SinkhornConfig) -> SinkhornResult:
    """Solve regularised transport between p and q under cost C.

    Returns the plan, the scaling vectors factoring it, and a report with
    the iteration count and the final normalised residual.  Hitting
    ``max_iters`` is not an error: the best iterate seen is returned with
    ``converged=False``.  Rows and columns whose marginal entry is zero are
    excised before iterating and reinserted as zeros.
    """
    C = as_cost_matrix(C)
    p = as_marginal(p, "p")
    q = as_marginal(q, "q")
    _check_dims(C, p, q)
    q = equalize_masses(p, q)

    rows = p > 0
    cols = q > 0
    C_act = C[np.ix_(rows, cols)]
    p_act = p[rows]
    q_act = q[cols]

    t0 = time.perf_counter()
    use_log = config.log_domain or (
        config.epsilon < LOG_DOMAIN_FACTOR * float(C_act.max(initial=0.0))
    )
    escalated = False
    if use_log:
        plan_act, a_act, b_act, iters, res, hist, done = _sinkhorn_log(C_act, p_act, q_act, config)
        method = "sinkhorn_log"
    else:
        try:
            plan_act, a_act, b_act, iters, res, hist, done = _sinkhorn_std(C_act, p_act, q_act, config)
            method = "sinkhorn"
        except _NeedsLogDomain:
            plan_act, a_act, b_act, iters, res, hist, done = _sinkhorn_log(C_act, p_act, q_act, config)
            method = "sinkhorn_log"
            escalated = True
    wall_ms = (time.perf_counter() - t0) * 1e3

    m, n = C.shape
    a = np.zeros(m)
    b = np.zeros(n)
    a[rows] = a_act
    b[cols] = b_act
    plan = np.zeros((m, n))
    plan[np.ix_(rows, cols)] = plan_act

    report = SolveReport(
        method=method,
        iterations=iters,
        final_residual=res,
        cost=transport_cost(plan, C),
        wall_time_ms=wall_ms,
        converged=done,
        escalated=escalated,
        residual_history=hist,
    )
    return SinkhornResult(plan=plan, a=a, b=b, report=report)


def _sinkhorn_std(C, p, q, config: SinkhornConfig):
    """Standard-domain scaling; raises _NeedsLogDomain on underflow."""
    xi = np.exp(-C / config.epsilon)
    mass = p.sum()
    b = np.ones_like(q)
    r = xi @ b  # row denominators; refreshed at the end of each iteration
    hist: list[float] | None = [] if config.track_history else None
    best_res = np.inf
    best_ab = None
    a = None
    for it in range(1, config.max_iters + 1):
        if not np.all(np.isfinite(r)) or r.min() < UNDERFLOW_FLOOR:
            raise _NeedsLogDomain
        a = p / r
        s = xi.T @ a
        if not np.all(np.isfinite(s)) or s.min() < UNDERFLOW_FLOOR:
            raise _NeedsLogDomain
        b = q / s
        # After the column update the column sums are exact, so the residual
        # reduces to the row gap under the refreshed denominators.
        r = xi @ b
        res = float(np.abs(a * r - p).sum() / mass)
        if hist is not None:
            hist.append(res)
        if res < best_res:
            best_res = res
            best_ab = (a.copy(), b.copy())
        if res <= config.residual_tol:
            return a[:, None] * xi * b[None, :], a, b, it, res, hist, True
    a, b = best_ab
    return a[:, None] * xi * b[None, :], a, b, config.max_iters, best_res, hist, False


def _logsumexp(A: np.ndarray, axis: int) -> np.ndarray:
    M = A.max(axis=axis, keepdims=True)
    return M.squeeze(axis=axis) + np.log(np.exp(A - M).sum(axis=axis))


def _sinkhorn_log(C, p, q, config: SinkhornConfig):
    """Log-domain scaling on dual potentials; safe for tiny epsilon."""
    K = -C / config.epsilon
    mass = p.sum()
    logp = np.log(p)
    logq = np.log(q)
    psi = np.zeros_like(q)  # log b
    S = _logsumexp(K + psi[None, :], axis=1)
    hist: list[float] | None = [] if config.track_history else None
    best_res = np.inf
    best_pots = None
    phi = None
    for it in range(1, config.max_iters + 1):
        phi = logp - S
        psi = logq - _logsumexp(K + phi[:, None], axis=0)
        S = _logsumexp(K + psi[None, :], axis=1)
        res = float(np.abs(np.exp(phi + S) - p).sum() / mass)
        if hist is not None:
            hist.append(res)
        if res < best_res:
            best_res = res
            best_pots = (phi.copy(), psi.copy())
        if res <= config.residual_tol:
            break
    else:
        phi, psi = best_pots
        res = best_res
    plan = np.exp(K + phi[:, None] + psi[None, :])
    done = res <= config.residual_tol
    it = it if done else config.max_iters
    # the scaling vectors can over- or underflow for extreme potentials;
    # the plan above is computed in log space and stays finite regardless
    with np.errstate(over="ignore"):
        a = np.exp(phi)
        b = np.exp(psi)
    return plan, a, b, it, res, hist, done

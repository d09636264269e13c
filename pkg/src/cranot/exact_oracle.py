"""Exact solver for the transportation linear program.

    min  sum_ij C_ij x_ij   s.t.  sum_j x_ij = p_i,  sum_i x_ij = q_j,  x >= 0

Solved by a primal simplex on the bipartite flow network (rows fed by a
virtual source with capacities p, columns drained by a virtual sink with
capacities q).  The basis is a spanning tree of the bipartite graph, so
every returned plan is a vertex with at most m + n - 1 positive entries,
and the tree duals certify optimality via complementary slackness.

Entering arcs follow Dantzig's rule (most negative reduced cost); after a
run of degenerate pivots the solver permanently switches to Bland's rule,
which cannot cycle, so termination is guaranteed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .ot_core import as_cost_matrix, as_marginal, equalize_masses

__all__ = [
    "ExactSolution",
    "FlowNetwork",
    "SizeCapError",
    "build_flow_network",
    "exact_ot",
]

DEFAULT_SIZE_CAP = 1_000_000  # max m*n transport variables per solve


class SizeCapError(ValueError):
    """Instance exceeds the configured variable cap for the exact solver."""


@dataclass(frozen=True)
class FlowNetwork:
    """Bipartite min-cost-flow view of a transportation instance.

    Nodes are numbered rows 0..m-1, columns m..m+n-1, then the virtual
    source m+n and sink m+n+1.  Sending mass(p) units from source to sink
    at minimum cost is equivalent to solving the transportation LP: the
    transport-arc flows are exactly the plan entries.
    """

    supplies: np.ndarray  # capacities of the source->row arcs (= p)
    demands: np.ndarray  # capacities of the column->sink arcs (= q)
    costs: np.ndarray  # m x n transport-arc costs

    @property
    def num_rows(self) -> int:
        return self.costs.shape[0]

    @property
    def num_cols(self) -> int:
        return self.costs.shape[1]

    @property
    def source(self) -> int:
        return self.num_rows + self.num_cols

    @property
    def sink(self) -> int:
        return self.num_rows + self.num_cols + 1

    def arcs(self) -> list[tuple[int, int, float, float]]:
        """All arcs as (tail, head, capacity, unit_cost)."""
        m, n = self.costs.shape
        out = [(self.source, i, float(self.supplies[i]), 0.0) for i in range(m)]
        out += [
            (i, m + j, np.inf, float(self.costs[i, j]))
            for i in range(m)
            for j in range(n)
        ]
        out += [(m + j, self.sink, float(self.demands[j]), 0.0) for j in range(n)]
        return out

    def flow_from_plan(self, plan: np.ndarray) -> dict[tuple[int, int], float]:
        """Arc flows realising a plan (source/sink arcs run at capacity)."""
        m, n = self.costs.shape
        plan = np.asarray(plan, dtype=float)
        flows = {(self.source, i): float(plan[i].sum()) for i in range(m)}
        for i in range(m):
            for j in range(n):
                flows[(i, m + j)] = float(plan[i, j])
        for j in range(n):
            flows[(m + j, self.sink)] = float(plan[:, j].sum())
        return flows

    def plan_from_flow(self, flows: dict[tuple[int, int], float]) -> np.ndarray:
        """Inverse of flow_from_plan: read the plan off the transport arcs."""
        m, n = self.costs.shape
        plan = np.zeros((m, n))
        for i in range(m):
            for j in range(n):
                plan[i, j] = flows.get((i, m + j), 0.0)
        return plan


@dataclass
class ExactSolution:
    """Optimal vertex plan with its dual certificate."""

    plan: np.ndarray
    optimal_cost: float
    basis_size: int  # strictly positive entries; at most m + n - 1
    u: np.ndarray  # row duals, u_i + v_j <= C_ij with equality on support
    v: np.ndarray
    pivots: int


def build_flow_network(C, p, q) -> FlowNetwork:
    C = as_cost_matrix(C)
    p = as_marginal(p, "p")
    q = as_marginal(q, "q")
    if C.shape != (p.shape[0], q.shape[0]):
        raise ValueError(
            f"cost matrix shape {C.shape} does not match marginals "
            f"({p.shape[0]}, {q.shape[0]})"
        )
    q = equalize_masses(p, q)
    return FlowNetwork(supplies=p, demands=q, costs=C)


def _northwest_corner(p: np.ndarray, q: np.ndarray):
    """Initial basic feasible solution; exactly m + n - 1 basic cells."""
    m, n = len(p), len(q)
    X = np.zeros((m, n))
    basis: list[tuple[int, int]] = []
    a = p.copy()
    b = q.copy()
    i = j = 0
    while True:
        t = min(a[i], b[j])
        X[i, j] = t
        basis.append((i, j))
        a[i] -= t
        b[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if a[i] <= 0.0 and i < m - 1:
            i += 1
        else:
            j += 1
    return X, basis


class _TreeBasis:
    """Spanning-tree basis over row nodes 0..m-1 and column nodes m..m+n-1."""

    def __init__(self, m: int, n: int, arcs: list[tuple[int, int]]):
        self.m = m
        self.n = n
        self.adj: list[set[int]] = [set() for _ in range(m + n)]
        self.mask = np.zeros((m, n), dtype=bool)
        for i, j in arcs:
            self.add(i, j)

    def add(self, i: int, j: int) -> None:
        self.adj[i].add(self.m + j)
        self.adj[self.m + j].add(i)
        self.mask[i, j] = True

    def remove(self, i: int, j: int) -> None:
        self.adj[i].discard(self.m + j)
        self.adj[self.m + j].discard(i)
        self.mask[i, j] = False

    def duals(self, C: np.ndarray):
        """u, v with u_i + v_j = C_ij on every basic arc (root u_0 = 0)."""
        m, n = self.m, self.n
        u = np.full(m, np.nan)
        v = np.full(n, np.nan)
        u[0] = 0.0
        stack = [0]
        while stack:
            node = stack.pop()
            for nb in self.adj[node]:
                if node < m:
                    j = nb - m
                    if np.isnan(v[j]):
                        v[j] = C[node, j] - u[node]
                        stack.append(nb)
                else:
                    if np.isnan(u[nb]):
                        u[nb] = C[nb, node - m] - v[node - m]
                        stack.append(nb)
        return u, v

    def path(self, start: int, goal: int) -> list[int]:
        """Unique tree path between two nodes (BFS with parent pointers)."""
        parent = {start: -1}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for nb in self.adj[node]:
                if nb not in parent:
                    parent[nb] = node
                    queue.append(nb)
        path = [goal]
        while path[-1] != start:
            path.append(parent[path[-1]])
        path.reverse()
        return path


def exact_ot(
    C,
    p,
    q,
    *,
    size_cap: int = DEFAULT_SIZE_CAP,
    max_pivots: int | None = None,
) -> ExactSolution:
    """Solve the transportation LP exactly; see module docstring.

    Raises SizeCapError when m*n exceeds ``size_cap`` (large instances
    belong to the scaling solver, not the oracle).
    """
    C = as_cost_matrix(C)
    p = as_marginal(p, "p")
    q = as_marginal(q, "q")
    if C.shape != (p.shape[0], q.shape[0]):
        raise ValueError(
            f"cost matrix shape {C.shape} does not match marginals "
            f"({p.shape[0]}, {q.shape[0]})"
        )
    m, n = C.shape
    if m * n > size_cap:
        raise SizeCapError(f"instance has {m * n} variables, cap is {size_cap}")
    q = equalize_masses(p, q)

    X, basic_arcs = _northwest_corner(p, q)
    basis = _TreeBasis(m, n, basic_arcs)
    tol = 1e-10 * max(1.0, float(C.max()))
    theta_tol = 1e-13 * max(1.0, float(p.sum()))
    if max_pivots is None:
        max_pivots = 1000 + 200 * (m + n) + 2 * m * n
    stall_limit = 3 * (m + n)

    bland = False
    stall = 0
    pivots = 0
    for pivots in range(1, max_pivots + 1):
        u, v = basis.duals(C)
        reduced = C - u[:, None] - v[None, :]
        reduced[basis.mask] = 0.0  # kill roundoff on basic arcs
        if bland:
            eligible = (reduced < -tol).ravel()
            if not eligible.any():
                pivots -= 1
                break
            k = int(np.argmax(eligible))
        else:
            k = int(reduced.argmin())
            if reduced.ravel()[k] >= -tol:
                pivots -= 1
                break
        ei, ej = divmod(k, n)

        nodes = basis.path(ei, m + ej)
        cycle = []
        sign = -1  # first path arc shares row ei with the entering arc
        for a_node, b_node in zip(nodes, nodes[1:]):
            arc = (a_node, b_node - m) if a_node < m else (b_node, a_node - m)
            cycle.append((arc, sign))
            sign = -sign

        minus = [arc for arc, s in cycle if s == -1]
        theta = min(X[arc] for arc in minus)
        # lexicographically smallest among (near-)ties, for determinism and
        # as the leaving half of Bland's rule
        leave = min(arc for arc in minus if X[arc] <= theta + theta_tol)
        X[ei, ej] += theta
        for arc, s in cycle:
            X[arc] += s * theta
        X[leave] = 0.0
        basis.remove(*leave)
        basis.add(ei, ej)

        if theta <= theta_tol:
            stall += 1
            if stall > stall_limit:
                bland = True
        else:
            stall = 0
    else:
        raise RuntimeError(f"simplex did not terminate within {max_pivots} pivots")

    np.maximum(X, 0.0, out=X)
    u, v = basis.duals(C)
    return ExactSolution(
        plan=X,
        optimal_cost=float(np.sum(C * X)),
        basis_size=int(np.count_nonzero(X > 0)),
        u=u,
        v=v,
        pivots=pivots,
    )

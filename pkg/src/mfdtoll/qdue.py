"""Quasi-dynamic user equilibrium: travel times, costs, shortest paths and logit splits."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .demand import DemandProfile
from .network import NetworkSpec, RegionParams, Topology
from .plant import NetworkState, SplitRates, Trajectory, simulate


@dataclass(frozen=True)
class ChoiceSpec:
    mu: float = 1.0
    vot: float = 27.0

    def __post_init__(self):
        if self.mu <= 0 or self.vot <= 0:
            raise ValueError("mu and vot must be positive")


def region_travel_time(params: RegionParams, n: float, cap_factor: float = 10.0) -> float:
    """Average time to cross a region at accumulation ``n``, in seconds."""
    mfd = params.mfd
    if n <= 0:
        return 1.0 / mfd.c
    cap = cap_factor * mfd.n_jam / max(mfd.outflow(mfd.n_jam), 1e-9)
    g = mfd.outflow_clamped(n)
    if g < 1e-9:
        return cap
    return min(n / g, cap)


def travel_time_matrix(spec: NetworkSpec, state: NetworkState) -> np.ndarray:
    """``tau[I, H] = tau_I + tau_H`` for adjacent pairs, ``inf`` elsewhere."""
    totals = state.totals
    tau = np.array([region_travel_time(r, n) for r, n in zip(spec.regions, totals)])
    out = np.full((spec.k, spec.k), np.inf)
    adj = spec.topology.adjacency
    out[adj] = (tau[:, None] + tau[None, :])[adj]
    return out


def generalized_costs(tt: np.ndarray, choice: ChoiceSpec, prices: np.ndarray | None = None):
    costs = tt * (choice.vot / 3600.0)
    if prices is not None:
        costs = costs + prices
    return costs


def dijkstra(costs: np.ndarray, source: int) -> np.ndarray:
    """Label-setting shortest distances from 0-based ``source``; ``inf`` marks no edge."""
    k = costs.shape[0]
    dist = np.full(k, np.inf)
    dist[source] = 0.0
    done = np.zeros(k, dtype=bool)
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v in range(k):
            w = costs[u, v]
            if v != u and np.isfinite(w) and d + w < dist[v]:
                dist[v] = d + w
                heapq.heappush(heap, (dist[v], v))
    return dist


def shortest_path_costs(costs: np.ndarray, topology: Topology, i: int, j: int, h: int) -> float:
    """Cheapest ``i -> h -> ... -> j`` cost with first stop-over ``h`` (1-based ids)."""
    if not topology.adjacent(i, h):
        return np.inf
    first = costs[i - 1, h - 1]
    if h == j:
        return float(first)
    return float(first + dijkstra(costs, h - 1)[j - 1])


def mnl_split(alternative_costs, mu: float) -> np.ndarray:
    c = np.asarray(alternative_costs, dtype=float)
    finite = np.isfinite(c)
    if not finite.any():
        raise ValueError("no finite alternative")
    u = np.where(finite, -mu * c, -np.inf)
    w = np.exp(u - u[finite].max())
    return w / w.sum()


def qdue_splits(spec: NetworkSpec, costs: np.ndarray, mu: float) -> SplitRates:
    k = spec.k
    dist = np.array([dijkstra(costs, s) for s in range(k)])
    theta = np.zeros((k, k, k))
    for i in spec.ids:
        for j in spec.ids:
            if i == j:
                continue
            hs = [t[1] for t in spec.triples if t[0] == i and t[2] == j]
            alt = [costs[i - 1, h - 1] + (0.0 if h == j else dist[h - 1, j - 1]) for h in hs]
            for h, p in zip(hs, mnl_split(alt, mu)):
                theta[i - 1, h - 1, j - 1] = p
        theta[i - 1, i - 1, i - 1] = 1.0
    return SplitRates(theta)


PriceProvider = Callable[[int, NetworkState, np.ndarray], np.ndarray]


def run_qdue(
    spec: NetworkSpec,
    demand: DemandProfile,
    horizon: int,
    choice: ChoiceSpec = ChoiceSpec(),
    prices_provider: PriceProvider | None = None,
    step_seconds: float = 20.0,
) -> Trajectory:
    """Logit route choice recomputed from the step-start state at every step.

    ``prices_provider(k, state, costs)`` returns the toll matrix to add to the
    unpriced generalized ``costs`` at step ``k``. The first step uses uniform
    splits. Costs and prices are kept in ``trajectory.extras``.
    """
    k = spec.k
    cost_log = np.zeros((horizon, k, k))
    price_log = np.zeros((horizon, k, k))
    uniform = SplitRates.uniform(spec)

    def controller(step_k, state):
        base = generalized_costs(travel_time_matrix(spec, state), choice)
        cost_log[step_k] = np.where(np.isfinite(base), base, 0.0)
        prices = None
        if prices_provider is not None:
            prices = prices_provider(step_k, state, base)
            price_log[step_k] = prices
        if step_k == 0:
            return uniform
        return qdue_splits(spec, base if prices is None else base + prices, choice.mu)

    traj = simulate(spec, demand, controller, horizon, step_seconds)
    traj.extras["costs"] = cost_log
    traj.extras["prices"] = price_log
    return traj

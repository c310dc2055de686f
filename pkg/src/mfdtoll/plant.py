"""Discrete-time multi-region accumulation dynamics.

Arrays are 0-based: ``n[i, j]`` is the accumulation in region ``i + 1`` heading
to region ``j + 1`` and ``theta[i, h, j]`` the share of that group routed over
neighbour ``h + 1``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .demand import DemandProfile
from .network import NetworkSpec

logger = logging.getLogger(__name__)


def triple_mask(spec: NetworkSpec) -> np.ndarray:
    mask = np.zeros((spec.k,) * 3, dtype=bool)
    for i, h, j in spec.triples:
        mask[i - 1, h - 1, j - 1] = True
    return mask


@dataclass
class NetworkState:
    n_ij: np.ndarray
    time_step: int = 0
    step_seconds: float = 20.0

    @classmethod
    def empty(cls, k: int, step_seconds: float = 20.0) -> "NetworkState":
        return cls(np.zeros((k, k)), 0, step_seconds)

    @property
    def totals(self) -> np.ndarray:
        return self.n_ij.sum(axis=1)

    @property
    def t(self) -> float:
        return self.time_step * self.step_seconds


@dataclass
class SplitRates:
    theta: np.ndarray

    @classmethod
    def uniform(cls, spec: NetworkSpec) -> "SplitRates":
        k = spec.k
        theta = np.zeros((k, k, k))
        for i, h, j in spec.triples:
            theta[i - 1, h - 1, j - 1] = 1.0 / len(
                [t for t in spec.triples if t[0] == i and t[2] == j]
            )
        for i in range(k):
            theta[i, i, i] = 1.0
        return cls(theta)

    def validate(self, spec: NetworkSpec, atol: float = 1e-9):
        th = self.theta
        if np.any(th < -atol) or np.any(th > 1 + atol):
            raise ValueError("split rates must lie in [0, 1]")
        if np.any(th[~triple_mask(spec) & ~_diag_mask(spec.k)] != 0):
            raise ValueError("split rate assigned to a forbidden path")
        sums = th.sum(axis=1)
        off = ~np.eye(spec.k, dtype=bool)
        if not np.allclose(sums[off], 1.0, atol=atol):
            raise ValueError("split rates of an OD pair do not sum to one")
        if not np.allclose(np.diagonal(sums), 1.0, atol=atol):
            raise ValueError("internal trips must keep theta_III = 1")

    def vector(self, spec: NetworkSpec) -> np.ndarray:
        return np.array([self.theta[i - 1, h - 1, j - 1] for i, h, j in spec.triples])


def _diag_mask(k):
    m = np.zeros((k, k, k), dtype=bool)
    m[np.arange(k), np.arange(k), np.arange(k)] = True
    return m


@dataclass
class FlowRecord:
    m_ii: np.ndarray
    m_ihj: np.ndarray
    clamped: np.ndarray
    jam_violations: list = field(default_factory=list)

    @property
    def m_ih(self) -> np.ndarray:
        """Transfer flows aggregated over destinations, ``[I, H]``."""
        return self.m_ihj.sum(axis=2)


def internal_flow(spec: NetworkSpec, state: NetworkState, i: int) -> float:
    n_i = state.totals[i - 1]
    if n_i <= 0:
        return 0.0
    return state.n_ij[i - 1, i - 1] / n_i * spec.region(i).mfd.outflow_clamped(n_i)


def transfer_flow(spec: NetworkSpec, state: NetworkState, split: SplitRates, triple) -> float:
    i, h, j = triple
    totals = state.totals
    if totals[i - 1] <= 0:
        return 0.0
    sending = (
        split.theta[i - 1, h - 1, j - 1]
        * state.n_ij[i - 1, j - 1]
        / totals[i - 1]
        * spec.region(i).mfd.outflow_clamped(totals[i - 1])
    )
    return min(spec.capacities(totals)[h - 1], sending)


def step(
    spec: NetworkSpec,
    state: NetworkState,
    demand: DemandProfile,
    split: SplitRates,
) -> tuple[NetworkState, FlowRecord]:
    """Advance one forward-Euler step of length ``state.step_seconds``."""
    dt = state.step_seconds
    if dt <= 0:
        raise ValueError("step_seconds must be positive")
    k = spec.k
    n = state.n_ij
    totals = n.sum(axis=1)
    g = spec.outflows(totals)
    share = np.divide(n, totals[:, None], out=np.zeros_like(n), where=totals[:, None] > 0)

    m_ii = np.diagonal(share) * g
    theta = split.theta.copy()
    theta[np.arange(k), np.arange(k), np.arange(k)] = 0.0
    sending = theta * (share * g[:, None])[:, None, :]
    cap = spec.capacities(totals)
    m = np.minimum(sending, cap[None, :, None])
    clamped = sending > cap[None, :, None]

    out = m.sum(axis=1)
    out[np.arange(k), np.arange(k)] = m_ii
    need = dt * out
    over = need > n
    if np.any(over):
        scale = np.ones_like(n)
        scale[over] = n[over] / need[over]
        m = m * scale[:, None, :]
        m_ii = m_ii * np.diagonal(scale)
        out = m.sum(axis=1)
        out[np.arange(k), np.arange(k)] = m_ii

    t = state.t
    q = demand.mean_matrix(k, t, t + dt)
    inflow = m.sum(axis=0)
    new = np.maximum(n + dt * (q - out + inflow), 0.0)

    violations = [i + 1 for i in range(k) if new[i].sum() > spec.n_jam[i]]
    if violations:
        logger.warning("step %d: regions %s exceed jam accumulation", state.time_step, violations)
    rec = FlowRecord(m_ii, m, clamped, violations)
    return NetworkState(new, state.time_step + 1, dt), rec


SplitProvider = Callable[[int, NetworkState], SplitRates]


@dataclass
class Trajectory:
    """Simulation output. ``n`` holds ``horizon + 1`` states, flows hold ``horizon`` steps."""

    n: np.ndarray
    m_ii: np.ndarray
    m_ihj: np.ndarray
    theta: np.ndarray
    step_seconds: float
    injected: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.m_ii.shape[0]

    @property
    def totals(self) -> np.ndarray:
        return self.n.sum(axis=2)

    @property
    def m_ih(self) -> np.ndarray:
        return self.m_ihj.sum(axis=3)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.horizon + 1) * self.step_seconds

    def state(self, k: int) -> NetworkState:
        return NetworkState(self.n[k], k, self.step_seconds)

    def demand_volume(self) -> float:
        return float(self.injected.sum())

    def trips_ended(self) -> float:
        return float(self.m_ii.sum() * self.step_seconds)

    def stored(self) -> float:
        return float(self.n[-1].sum())


def simulate(
    spec: NetworkSpec,
    demand: DemandProfile,
    split_provider,
    horizon: int,
    step_seconds: float = 20.0,
    initial: NetworkState | None = None,
) -> Trajectory:
    """Run ``horizon`` plant steps.

    ``split_provider`` is either a fixed :class:`SplitRates` or a callable
    ``(k, state) -> SplitRates`` evaluated at the start of every step.
    """
    k = spec.k
    state = initial if initial is not None else NetworkState.empty(k, step_seconds)
    provider = split_provider if callable(split_provider) else (lambda _k, _s: split_provider)
    n = np.zeros((horizon + 1, k, k))
    m_ii = np.zeros((horizon, k))
    m_ihj = np.zeros((horizon, k, k, k))
    theta = np.zeros((horizon, k, k, k))
    injected = np.zeros((horizon, k, k))
    n[0] = state.n_ij
    for step_k in range(horizon):
        split = provider(step_k, state)
        t = state.t
        state, rec = step(spec, state, demand, split)
        n[step_k + 1] = state.n_ij
        m_ii[step_k] = rec.m_ii
        m_ihj[step_k] = rec.m_ihj
        theta[step_k] = split.theta
        injected[step_k] = demand.mean_matrix(k, t, t + step_seconds) * step_seconds
    return Trajectory(n, m_ii, m_ihj, theta, step_seconds, injected)

"""System-optimal routing by linear rolling-horizon optimisation.

Every control cycle the destination shares ``alpha`` are frozen from the
current plant state, the throughput-maximising LP over ``n_p`` steps is solved
with piecewise-affine MFD caps, and the first-step transfer flows are turned
back into split rates which the plant then applies for ``n_c`` steps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .demand import DemandProfile
from .lp import LpProblem, LpSolution, solve_lp
from .network import ConfigurationError, NetworkSpec, PwaMfd, pwa_approximate
from .plant import NetworkState, SplitRates, Trajectory, simulate

logger = logging.getLogger(__name__)


class LpInfeasibleError(RuntimeError):
    def __init__(self, cycle: int, status: str):
        super().__init__(f"LRHO cycle {cycle}: LP {status}")
        self.cycle = cycle
        self.status = status


@dataclass(frozen=True)
class LrhoConfig:
    n_p: int = 3
    n_c: int = 4
    t_c: float = 20.0
    sigma: float = 0.2
    lp_method: str = "simplex"

    def __post_init__(self):
        if self.n_p < 1 or self.n_c < 1:
            raise ValueError("n_p and n_c must be at least 1")
        if self.t_c <= 0:
            raise ValueError("t_c must be positive")
        if not 0 < self.sigma <= 1:
            raise ValueError("sigma must lie in (0, 1]")


@dataclass
class AlphaParams:
    alpha_ii: np.ndarray
    alpha_ij: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        """Full share matrix with ``alpha_ii`` on the diagonal."""
        out = self.alpha_ij.copy()
        np.fill_diagonal(out, self.alpha_ii)
        return out


def compute_alphas(state: NetworkState) -> AlphaParams:
    n = state.n_ij
    totals = n.sum(axis=1)
    share = np.divide(n, totals[:, None], out=np.zeros_like(n), where=totals[:, None] > 0)
    alpha_ii = np.diagonal(share).copy()
    alpha_ij = share.copy()
    np.fill_diagonal(alpha_ij, 0.0)
    return AlphaParams(alpha_ii, alpha_ij)


@dataclass
class LpLayout:
    """Column bookkeeping for one rolling-horizon LP."""

    n_p: int
    k: int
    pairs: list
    triples: list
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        names = []
        for s in range(self.n_p):
            for i in range(1, self.k + 1):
                names.append(("N", s, i))
            for i in range(1, self.k + 1):
                names.append(("fII", s, i))
            for p in self.pairs:
                names.append(("fIH", s, p))
            for t in self.triples:
                names.append(("fIHJ", s, t))
        self.keys = names
        self.index = {key: col for col, key in enumerate(names)}

    def __len__(self):
        return len(self.keys)

    def name(self, key) -> str:
        kind, s, idx = key
        suffix = "".join(map(str, idx)) if isinstance(idx, tuple) else str(idx)
        return f"{kind}_{suffix}_{s}"


def build_lp(
    spec: NetworkSpec,
    state: NetworkState,
    alphas: AlphaParams,
    pwa: list[PwaMfd],
    demand: DemandProfile,
    config: LrhoConfig,
    t0: float | None = None,
) -> tuple[LpProblem, LpLayout]:
    """Assemble the throughput-maximising LP starting from ``state``."""
    if len(pwa) != spec.k or any(p is None for p in pwa):
        raise ConfigurationError("a PWA MFD is required for every region")
    k, n_p, tc = spec.k, config.n_p, config.t_c
    t0 = state.t if t0 is None else t0
    pairs, triples = spec.border_pairs, spec.triples
    lay = LpLayout(n_p, k, pairs, triples)
    nv = len(lay)
    col = lay.index
    n0 = state.totals

    c = np.zeros(nv)
    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    for s in range(n_p):
        for i in spec.ids:
            c[col["fII", s, i]] = tc
            jam = spec.n_jam[i - 1]
            if s == 0:
                lb[col["N", 0, i]] = ub[col["N", 0, i]] = n0[i - 1]
            else:
                ub[col["N", s, i]] = jam
        for p in pairs:
            c[col["fIH", s, p]] = tc

    A_ub, b_ub, ub_names = [], [], []
    A_eq, b_eq, eq_names = [], [], []
    a_full = alphas.matrix

    def cap_rows(s, i, cols, alpha, label):
        # f_cols <= alpha * min_l(slope_l N + icpt_l)
        lines = pwa[i - 1]
        if alpha == 0.0:
            row = np.zeros(nv)
            row[cols] = 1.0
            A_ub.append(row), b_ub.append(0.0), ub_names.append(f"{label}_{s}")
            return
        if s == 0:
            row = np.zeros(nv)
            row[cols] = 1.0
            A_ub.append(row), b_ub.append(alpha * lines(n0[i - 1]))
            ub_names.append(f"{label}_{s}")
            return
        for l, (sl, ic) in enumerate(zip(lines.slopes, lines.intercepts)):
            row = np.zeros(nv)
            row[cols] = 1.0
            row[col["N", s, i]] = -alpha * sl
            A_ub.append(row), b_ub.append(alpha * ic), ub_names.append(f"{label}_{s}_l{l}")

    for s in range(n_p):
        for i in spec.ids:
            cap_rows(s, i, [col["fII", s, i]], a_full[i - 1, i - 1], f"capII_{i}")
            for j in spec.ids:
                if j == i:
                    continue
                cols = [col["fIHJ", s, t] for t in triples if t[0] == i and t[2] == j]
                cap_rows(s, i, cols, a_full[i - 1, j - 1], f"capIJ_{i}{j}")
        for p in pairs:
            row = np.zeros(nv)
            row[col["fIH", s, p]] = 1.0
            for t in triples:
                if (t[0], t[1]) == p:
                    row[col["fIHJ", s, t]] = -1.0
            A_eq.append(row), b_eq.append(0.0), eq_names.append(f"couple_{p[0]}{p[1]}_{s}")
        if s + 1 < n_p:
            t_lo = t0 + s * tc
            q_agg = demand.mean_matrix(k, t_lo, t_lo + tc).sum(axis=1)
            for i in spec.ids:
                row = np.zeros(nv)
                row[col["N", s + 1, i]] = 1.0
                row[col["N", s, i]] = -1.0
                row[col["fII", s, i]] = tc
                for p in pairs:
                    if p[0] == i:
                        row[col["fIH", s, p]] += tc
                    if p[1] == i:
                        row[col["fIH", s, p]] -= tc
                A_eq.append(row), b_eq.append(tc * q_agg[i - 1])
                eq_names.append(f"dyn_{i}_{s}")

    problem = LpProblem(
        c,
        np.array(A_ub).reshape(-1, nv),
        np.array(b_ub),
        np.array(A_eq).reshape(-1, nv),
        np.array(b_eq),
        lb,
        ub,
        names=[lay.name(key) for key in lay.keys],
        row_names=ub_names + eq_names,
    )
    return problem, lay


def project_band_simplex(raw: np.ndarray, prev: np.ndarray, sigma: float) -> np.ndarray:
    """Closest point to ``raw`` with entries in ``prev +- sigma`` (within [0, 1]) summing to one."""
    lo = np.maximum(prev - sigma, 0.0)
    hi = np.minimum(prev + sigma, 1.0)
    if lo.sum() > 1.0 or hi.sum() < 1.0:
        return prev.copy()
    left, right = -2.0, 2.0
    for _ in range(200):
        mid = 0.5 * (left + right)
        if np.clip(raw + mid, lo, hi).sum() < 1.0:
            left = mid
        else:
            right = mid
    out = np.clip(raw + right, lo, hi)
    return out / out.sum()


def recover_split_rates(
    spec: NetworkSpec,
    solution: LpSolution,
    layout: LpLayout,
    alphas: AlphaParams,
    pwa: list[PwaMfd],
    state: NetworkState,
    prev: SplitRates,
    config: LrhoConfig,
) -> SplitRates:
    """First-step LP flows back to split rates, then the oscillation bound."""
    x = solution.x
    theta = prev.theta.copy()
    totals = state.totals
    for i in spec.ids:
        g_pwa = pwa[i - 1](totals[i - 1])
        for j in spec.ids:
            if j == i:
                continue
            hs = [t[1] for t in spec.triples if t[0] == i and t[2] == j]
            denom = alphas.alpha_ij[i - 1, j - 1] * g_pwa
            old = np.array([prev.theta[i - 1, h - 1, j - 1] for h in hs])
            if denom < 1e-9:
                continue
            raw = np.array([max(x[layout.index["fIHJ", 0, (i, h, j)]], 0.0) for h in hs]) / denom
            if raw.sum() < 1e-9:
                continue
            new = project_band_simplex(raw / raw.sum(), old, config.sigma)
            for h, v in zip(hs, new):
                theta[i - 1, h - 1, j - 1] = v
    for i in range(spec.k):
        theta[i, i, i] = 1.0
    return SplitRates(theta)


@dataclass
class DsoResult:
    trajectory: Trajectory
    schedule: list  # (cycle, step, SplitRates, objective)


def run_lrho(
    spec: NetworkSpec,
    demand: DemandProfile,
    horizon: int,
    config: LrhoConfig = LrhoConfig(),
    pwa: list[PwaMfd] | None = None,
    pwa_lines: int = 20,
    step_seconds: float = 20.0,
    dump_dir: str | Path | None = None,
) -> DsoResult:
    if pwa is None:
        pwa = [pwa_approximate(r.mfd, pwa_lines) for r in spec.regions]
    current = SplitRates.uniform(spec)
    schedule = []

    def controller(k, state):
        nonlocal current
        if k % config.n_c:
            return current
        cycle = k // config.n_c
        alphas = compute_alphas(state)
        problem, layout = build_lp(spec, state, alphas, pwa, demand, config)
        if dump_dir is not None:
            Path(dump_dir).mkdir(parents=True, exist_ok=True)
            Path(dump_dir, f"lp_cycle{cycle:04d}.txt").write_text(problem.to_text())
        sol = solve_lp(problem, config.lp_method)
        if not sol.optimal:
            raise LpInfeasibleError(cycle, sol.status)
        current = recover_split_rates(spec, sol, layout, alphas, pwa, state, current, config)
        schedule.append((cycle, k, current, sol.objective))
        logger.debug("cycle %d: objective %.6g, %d pivots", cycle, sol.objective, sol.iterations)
        return current

    traj = simulate(spec, demand, controller, horizon, step_seconds)
    return DsoResult(traj, schedule)

"""Dense two-phase simplex for the small LPs of the rolling-horizon optimizer.

Problems are stated as::

    maximize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                lb <= x <= ub

Pivoting follows Bland's rule (lowest-index improving column, lowest-index
basic variable among ratio ties), so the pivot sequence is deterministic and
cannot cycle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class LpProblem:
    c: np.ndarray
    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    names: list = field(default_factory=list)
    row_names: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.c)
        self.c = np.asarray(self.c, dtype=float)
        self.A_ub = np.asarray(self.A_ub, dtype=float).reshape(-1, n)
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.asarray(self.ub, dtype=float).reshape(-1)
        if not self.names:
            self.names = [f"x{i}" for i in range(n)]

    @property
    def n_vars(self) -> int:
        return len(self.c)

    def to_text(self) -> str:
        """Plain-text standard form, one constraint per line."""

        def expr(row):
            terms = [f"{v:+.17g} {self.names[i]}" for i, v in enumerate(row) if v != 0.0]
            return " ".join(terms) if terms else "0"

        ub_names = self.row_names[: len(self.b_ub)] or [f"u{i}" for i in range(len(self.b_ub))]
        eq_names = self.row_names[len(self.b_ub):] or [f"e{i}" for i in range(len(self.b_eq))]
        lines = ["maximize", f"  obj: {expr(self.c)}", "subject to"]
        for name, row, b in zip(ub_names, self.A_ub, self.b_ub):
            lines.append(f"  {name}: {expr(row)} <= {b:.17g}")
        for name, row, b in zip(eq_names, self.A_eq, self.b_eq):
            lines.append(f"  {name}: {expr(row)} = {b:.17g}")
        lines.append("bounds")
        for name, lo, hi in zip(self.names, self.lb, self.ub):
            lines.append(f"  {lo:.17g} <= {name} <= {hi:.17g}")
        lines.append("end")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, T, basis, tol):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.iterations = 0

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        colvals = T[:, col].copy()
        colvals[row] = 0.0
        T -= np.outer(colvals, T[row])
        self.basis[row] = col
        self.iterations += 1

    def run(self, allowed, max_iter):
        """Optimise the objective in the last row over columns in ``allowed``."""
        T, tol = self.T, self.tol
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            red = T[-1, :-1]
            cand = np.flatnonzero((red < -tol) & allowed)
            if cand.size == 0:
                return OPTIMAL
            col = int(cand[0])
            colvals = T[:-1, col]
            pos = np.flatnonzero(colvals > tol)
            if pos.size == 0:
                return UNBOUNDED
            ratios = T[pos, -1] / colvals[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, abs(best))]
            row = int(ties[np.argmin(self.basis[ties])])
            self.pivot(row, col)


def _simplex(problem: LpProblem, tol=1e-9, max_iter=50_000) -> LpSolution:
    c, lb, ub = problem.c, problem.lb, problem.ub
    if np.any(~np.isfinite(lb)):
        raise ValueError("simplex backend needs finite lower bounds")
    if np.any(ub < lb - tol):
        return LpSolution(INFEASIBLE)
    fixed = np.isclose(lb, ub, rtol=0.0, atol=tol)
    free = np.flatnonzero(~fixed)
    x_fixed = np.where(fixed, lb, 0.0)

    # shift x = lb + y; drop fixed columns
    A_ub = problem.A_ub[:, free]
    b_ub = problem.b_ub - problem.A_ub @ lb
    A_eq = problem.A_eq[:, free]
    b_eq = problem.b_eq - problem.A_eq @ lb
    span = (ub - lb)[free]
    bounded = np.flatnonzero(np.isfinite(span))
    if bounded.size:
        box = np.zeros((bounded.size, free.size))
        box[np.arange(bounded.size), bounded] = 1.0
        A_ub = np.vstack([A_ub, box])
        b_ub = np.concatenate([b_ub, span[bounded]])
    cf = c[free]

    m_ub, m_eq, n = A_ub.shape[0], A_eq.shape[0], free.size
    flip = b_ub < 0
    rows_ub = np.where(flip[:, None], -A_ub, A_ub)
    rhs_ub = np.abs(b_ub)
    eq_flip = b_eq < 0
    rows_eq = np.where(eq_flip[:, None], -A_eq, A_eq)
    rhs_eq = np.abs(b_eq)

    m = m_ub + m_eq
    needs_art = np.concatenate([flip, np.ones(m_eq, dtype=bool)])
    n_art = int(needs_art.sum())
    ncol = n + m_ub + n_art
    T = np.zeros((m + 1, ncol + 1))
    T[:m_ub, :n] = rows_ub
    T[m_ub:m, :n] = rows_eq
    T[np.arange(m_ub), n + np.arange(m_ub)] = np.where(flip, -1.0, 1.0)
    T[:m_ub, -1] = rhs_ub
    T[m_ub:m, -1] = rhs_eq
    basis = np.empty(m, dtype=int)
    art_rows = np.flatnonzero(needs_art)
    art_cols = n + m_ub + np.arange(n_art)
    T[art_rows, art_cols] = 1.0
    basis[:] = n + np.arange(m)
    basis[m_ub:] = -1
    basis[art_rows] = art_cols
    tab = _Tableau(T, basis, tol)

    if n_art:
        # phase 1: maximise -sum(artificials)
        T[-1, :] = 0.0
        T[-1, art_cols] = 1.0
        T[-1] -= T[art_rows].sum(axis=0)
        allowed = np.ones(ncol, dtype=bool)
        status = tab.run(allowed, max_iter)
        if status == ITERATION_LIMIT:
            return LpSolution(status, iterations=tab.iterations)
        if -T[-1, -1] > tol * max(1.0, np.abs(T[:m, -1]).max(initial=0.0)) * 10:
            return LpSolution(INFEASIBLE, iterations=tab.iterations)
        # drive zero-level artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n + m_ub:
                cols = np.flatnonzero(np.abs(T[r, : n + m_ub]) > tol)
                if cols.size:
                    tab.pivot(r, int(cols[0]))
                else:
                    keep[r] = False
        if not keep.all():
            T = np.vstack([T[:m][keep], T[-1:]])
            tab.T, tab.basis = T, tab.basis[keep]
            m = int(keep.sum())
    allowed = np.zeros(ncol, dtype=bool)
    allowed[: n + m_ub] = True

    # phase 2 objective row: reduced costs z_j - c_j
    T = tab.T
    T[-1, :] = 0.0
    T[-1, :n] = -cf
    for r in range(m):
        b = tab.basis[r]
        if b < n and cf[b] != 0.0:
            T[-1] += cf[b] * T[r]
    status = tab.run(allowed, max_iter)
    if status != OPTIMAL:
        return LpSolution(status, iterations=tab.iterations)
    y = np.zeros(ncol)
    y[tab.basis] = T[:m, -1]
    x = x_fixed.copy()
    x[free] = lb[free] + y[:n]
    return LpSolution(OPTIMAL, x, float(c @ x), tab.iterations)


def _highs(problem: LpProblem) -> LpSolution:
    from scipy.optimize import linprog

    res = linprog(
        -problem.c,
        A_ub=problem.A_ub if len(problem.b_ub) else None,
        b_ub=problem.b_ub if len(problem.b_ub) else None,
        A_eq=problem.A_eq if len(problem.b_eq) else None,
        b_eq=problem.b_eq if len(problem.b_eq) else None,
        bounds=list(zip(problem.lb, np.where(np.isfinite(problem.ub), problem.ub, None))),
        method="highs",
    )
    status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, ITERATION_LIMIT)
    if status != OPTIMAL:
        return LpSolution(status)
    return LpSolution(OPTIMAL, res.x, float(problem.c @ res.x), int(res.nit))


def solve_lp(problem: LpProblem, method: str = "simplex") -> LpSolution:
    """Solve ``problem``; ``method`` is ``"simplex"`` (built in) or ``"highs"`` (scipy)."""
    if method == "simplex":
        return _simplex(problem)
    if method == "highs":
        return _highs(problem)
    raise ValueError(f"unknown LP method {method!r}")

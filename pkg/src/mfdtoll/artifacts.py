"""CSV persistence for trajectories and schedules.

Floats are written with ``repr`` so that reading a file back yields the
identical binary values; later pipeline stages rely on that.
"""
from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .network import NetworkSpec
from .plant import Trajectory


class MissingArtifactError(FileNotFoundError):
    pass


def _fmt(v) -> str:
    return repr(float(v))


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else (str(x) if isinstance(x, (int, np.integer)) else _fmt(x)) for x in row])


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    if not Path(path).exists():
        raise MissingArtifactError(f"missing artifact {path}")
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(x) for x in row] for row in r], dtype=float)
    return header, data.reshape(-1, len(header))


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def state_columns(spec: NetworkSpec) -> list[str]:
    cols = [f"N_{i}{j}" for i in spec.ids for j in spec.ids]
    return cols + [f"N_{i}" for i in spec.ids]


def flow_columns(spec: NetworkSpec, with_costs=False) -> list[str]:
    cols = [f"M_{i}{i}" for i in spec.ids]
    cols += [f"M_{i}{h}{j}" for i, h, j in spec.triples]
    cols += [f"theta_{i}{h}{j}" for i, h, j in spec.triples]
    cols += [f"Qvol_{i}{j}" for i in spec.ids for j in spec.ids]
    if with_costs:
        cols += [f"C_{i}{h}" for i, h in spec.border_pairs]
        cols += [f"P_{i}{h}" for i, h in spec.border_pairs]
    return cols


def write_trajectory(directory: Path, spec: NetworkSpec, traj: Trajectory) -> list[Path]:
    """``states.csv`` (T+1 rows) and ``flows.csv`` (T rows)."""
    directory = Path(directory)
    k = spec.k
    tot = traj.totals
    states = [
        [s, s * traj.step_seconds, *traj.n[s].ravel(), *tot[s]] for s in range(traj.horizon + 1)
    ]
    p_states = directory / "states.csv"
    write_csv(p_states, ["step", "time", *state_columns(spec)], states)

    with_costs = "costs" in traj.extras
    rows = []
    for s in range(traj.horizon):
        row = [s, s * traj.step_seconds, *traj.m_ii[s]]
        row += [traj.m_ihj[s, i - 1, h - 1, j - 1] for i, h, j in spec.triples]
        row += [traj.theta[s, i - 1, h - 1, j - 1] for i, h, j in spec.triples]
        row += list(traj.injected[s].reshape(k * k))
        if with_costs:
            row += [traj.extras["costs"][s, i - 1, h - 1] for i, h in spec.border_pairs]
            row += [traj.extras["prices"][s, i - 1, h - 1] for i, h in spec.border_pairs]
        rows.append(row)
    p_flows = directory / "flows.csv"
    write_csv(p_flows, ["step", "time", *flow_columns(spec, with_costs)], rows)
    return [p_states, p_flows]


def read_trajectory(directory: Path, spec: NetworkSpec) -> Trajectory:
    directory = Path(directory)
    k = spec.k
    _, st = read_csv(directory / "states.csv")
    head, fl = read_csv(directory / "flows.csv")
    T = fl.shape[0]
    step_seconds = float(st[1, 1] - st[0, 1]) if len(st) > 1 else 20.0
    n = st[:, 2 : 2 + k * k].reshape(-1, k, k)
    col = 2
    m_ii = fl[:, col : col + k]
    col += k
    nt = len(spec.triples)
    m_ihj = np.zeros((T, k, k, k))
    theta = np.zeros((T, k, k, k))
    for c, (i, h, j) in enumerate(spec.triples):
        m_ihj[:, i - 1, h - 1, j - 1] = fl[:, col + c]
        theta[:, i - 1, h - 1, j - 1] = fl[:, col + nt + c]
    theta[:, np.arange(k), np.arange(k), np.arange(k)] = 1.0
    col += 2 * nt
    injected = fl[:, col : col + k * k].reshape(T, k, k)
    col += k * k
    traj = Trajectory(n.copy(), m_ii.copy(), m_ihj, theta, step_seconds, injected.copy())
    if len(head) > col:
        npairs = len(spec.border_pairs)
        costs = np.zeros((T, k, k))
        prices = np.zeros((T, k, k))
        for c, (i, h) in enumerate(spec.border_pairs):
            costs[:, i - 1, h - 1] = fl[:, col + c]
            prices[:, i - 1, h - 1] = fl[:, col + npairs + c]
        traj.extras["costs"] = costs
        traj.extras["prices"] = prices
    return traj


def write_schedule(path: Path, spec: NetworkSpec, schedule) -> Path:
    header = ["cycle", "step", "objective", *[f"theta_{i}{h}{j}" for i, h, j in spec.triples]]
    rows = [[c, s, obj, *split.vector(spec)] for c, s, split, obj in schedule]
    write_csv(Path(path), header, rows)
    return Path(path)

"""Time spent, distance travelled, trips served and comparison tables."""
from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .network import NetworkSpec
from .plant import Trajectory

logger = logging.getLogger(__name__)


def time_spent(traj: Trajectory, region: int) -> float:
    """Accumulation of ``region`` summed over steps ``1..T``, in veh·h."""
    return float(traj.step_seconds * traj.totals[1:, region - 1].sum() / 3600.0)


def time_spent_raw(traj: Trajectory, region: int) -> float:
    """Unweighted step-sum of accumulations."""
    return float(traj.totals[1:, region - 1].sum())


def total_traveled_distance(traj: Trajectory, spec: NetworkSpec) -> float:
    """Flows leaving each region weighted by its average trip length, in veh·km."""
    lengths = np.array([r.avg_trip_length for r in spec.regions])
    k = spec.k
    off = ~np.eye(k, dtype=bool)
    transfer = traj.m_ihj.sum(axis=2)  # [t, I, J]
    sent = traj.m_ii + (transfer * off).sum(axis=2)
    return float(traj.step_seconds * (sent @ lengths).sum() / 1000.0)


def vehicles_served(traj: Trajectory, empty_tol: float = 1e-6) -> float:
    """Cumulative trip endings."""
    left = traj.stored()
    if left > empty_tol:
        warnings.warn(f"network still holds {left:.6g} veh at the final step", RuntimeWarning)
    return traj.trips_ended()


def mean_absolute_error(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=float).ravel()
    a = np.asarray(actual, dtype=float).ravel()
    if p.size != a.size:
        raise ValueError("length mismatch")
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.abs(p - a).mean())


@dataclass
class MetricsReport:
    ts_per_region: np.ndarray
    tts: float
    ttd: float
    vehicles_served: float
    remaining: float = 0.0

    @classmethod
    def from_trajectory(cls, traj: Trajectory, spec: NetworkSpec) -> "MetricsReport":
        ts = np.array([time_spent(traj, i) for i in spec.ids])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            served = vehicles_served(traj)
        return cls(ts, float(ts.sum()), total_traveled_distance(traj, spec), served, traj.stored())

    def rows(self) -> list[tuple[str, float]]:
        out = [(f"TS{i + 1}", float(v)) for i, v in enumerate(self.ts_per_region)]
        out += [("TTS", self.tts), ("TTD", self.ttd), ("N", self.vehicles_served)]
        return out


def improvement(base: float, variant: float) -> float:
    if base == 0:
        raise ZeroDivisionError("baseline metric is zero")
    return (base - variant) / base * 100.0


def compare(baseline: MetricsReport, variant: MetricsReport) -> list[tuple[str, float, float, float]]:
    """``(metric, baseline, variant, improvement %)`` rows."""
    out = []
    for (name, b), (_, v) in zip(baseline.rows(), variant.rows()):
        out.append((name, b, v, improvement(b, v)))
    return out


def comparison_text(rows, labels=("baseline", "variant")) -> str:
    head = f"{'metric':<8}{labels[0]:>16}{labels[1]:>16}{'improvement %':>16}"
    lines = [head, "-" * len(head)]
    for name, b, v, imp in rows:
        lines.append(f"{name:<8}{b:>16.4f}{v:>16.4f}{imp:>16.2f}")
    return "\n".join(lines) + "\n"


def comparison_csv(rows, labels=("baseline", "variant")) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", labels[0], labels[1], "improvement_pct"])
    for name, b, v, imp in rows:
        w.writerow([name, repr(b), repr(v), repr(imp)])
    return buf.getvalue()


def price_table_text(avg: dict) -> str:
    lines = [f"{'toll':<8}{'avg CHF':>10}"]
    for (i, h), v in avg.items():
        cell = "inactive" if np.isnan(v) else f"{v:.2f}"
        lines.append(f"P{i}{h:<6}{cell:>10}")
    return "\n".join(lines) + "\n"

"""Trapezoidal origin-destination demand profiles."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Trapezoid:
    t_start: float
    t_rise: float
    t_const: float
    t_fall: float
    magnitude: float

    def __post_init__(self):
        if min(self.t_rise, self.t_const, self.t_fall) < 0:
            raise ValueError("trapezoid durations must be non-negative")
        if self.magnitude < 0:
            raise ValueError("trapezoid magnitude must be non-negative")

    @property
    def knots(self):
        t0 = self.t_start
        t1 = t0 + self.t_rise
        t2 = t1 + self.t_const
        t3 = t2 + self.t_fall
        return t0, t1, t2, t3

    @property
    def t_end(self) -> float:
        return self.knots[3]

    def __call__(self, t):
        t0, t1, t2, t3 = self.knots
        arr = np.asarray(t, dtype=float)
        tt = np.atleast_1d(arr)
        out = np.zeros_like(tt)
        if t3 > t0:
            q = self.magnitude
            out[(tt >= t1) & (tt <= t2)] = q
            if self.t_rise > 0:
                m = (tt >= t0) & (tt < t1)
                out[m] = q * (tt[m] - t0) / self.t_rise
            if self.t_fall > 0:
                m = (tt > t2) & (tt <= t3)
                out[m] = q * (t3 - tt[m]) / self.t_fall
        return float(out[0]) if arr.ndim == 0 else out

    def cumulative(self, t) -> float:
        """Exact integral of the profile over ``[0, t]``."""
        t0, t1, t2, t3 = self.knots
        q = self.magnitude
        t = float(t)
        if t <= t0:
            return 0.0
        if t <= t1:
            return 0.5 * q * (t - t0) ** 2 / self.t_rise
        vol = 0.5 * q * self.t_rise
        if t <= t2:
            return vol + q * (t - t1)
        vol += q * self.t_const
        if t <= t3:
            rest = t3 - t
            return vol + 0.5 * q * (self.t_fall - rest**2 / self.t_fall)
        return vol + 0.5 * q * self.t_fall


def demand_at(tz: Trapezoid, t: float) -> float:
    if t < 0:
        raise ValueError("time must be non-negative")
    return tz(t)


def total_volume(tz: Trapezoid) -> float:
    return tz.magnitude * (tz.t_const + 0.5 * (tz.t_rise + tz.t_fall))


@dataclass
class DemandProfile:
    """Trapezoids keyed by ordered ``(origin, destination)`` region pairs."""

    od_trapezoids: dict = field(default_factory=dict)

    def add(self, i: int, j: int, tz: Trapezoid):
        self.od_trapezoids.setdefault((i, j), []).append(tz)

    def validate(self, k: int):
        for i, j in self.od_trapezoids:
            if not (1 <= i <= k and 1 <= j <= k):
                raise ValueError(f"demand pair ({i}, {j}) references an unknown region")

    def od_demand(self, i: int, j: int, t: float) -> float:
        return sum(tz(t) for tz in self.od_trapezoids.get((i, j), ()))

    def matrix(self, k: int, t: float) -> np.ndarray:
        """``Q[I-1, J-1]`` in veh/s at time ``t``."""
        q = np.zeros((k, k))
        for (i, j), tzs in self.od_trapezoids.items():
            q[i - 1, j - 1] += sum(tz(t) for tz in tzs)
        return q

    def mean_matrix(self, k: int, t0: float, t1: float) -> np.ndarray:
        """Average rate over ``[t0, t1]``; used as the per-step injection rate."""
        q = np.zeros((k, k))
        for (i, j), tzs in self.od_trapezoids.items():
            q[i - 1, j - 1] += sum(tz.cumulative(t1) - tz.cumulative(t0) for tz in tzs)
        return q / (t1 - t0)

    def aggregate(self, k: int, t: float) -> np.ndarray:
        """``Q_I(t)``, summed over all destinations."""
        return self.matrix(k, t).sum(axis=1)

    def total_volume(self) -> float:
        return sum(total_volume(tz) for tzs in self.od_trapezoids.values() for tz in tzs)

    def t_end(self) -> float:
        ends = [tz.t_end for tzs in self.od_trapezoids.values() for tz in tzs]
        return max(ends, default=0.0)


def od_demand(profile: DemandProfile, i: int, j: int, t: float) -> float:
    return profile.od_demand(i, j, t)

"""Static description of a multi-region network.

Regions are identified by 1-based integer ids. Each region carries a cubic
MFD ``G(n) = a n^3 + b n^2 + c n`` (veh/s) whose coefficients already absorb
the average trip length, a jam accumulation and a boundary capacity used to
throttle incoming transfer flows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np


class DomainError(ValueError):
    """Accumulation outside the admissible range of a region."""


class ConfigurationError(ValueError):
    """Inconsistent network description."""


@dataclass(frozen=True)
class MfdPolynomial:
    a: float
    b: float
    c: float
    n_jam: float

    def __post_init__(self):
        if self.n_jam <= 0:
            raise ConfigurationError("n_jam must be positive")
        if self.c <= 0:
            raise ConfigurationError("linear MFD coefficient must be positive")
        grid = np.linspace(0.0, self.n_jam, 2001)[1:-1]
        if np.any(self._raw(grid) <= 0):
            raise ConfigurationError("MFD must be positive on (0, n_jam)")
        roots = self._stationary_points()
        maxima = [r for r in roots if self._second_derivative(r) < 0]
        if len(maxima) != 1:
            raise ConfigurationError(
                f"MFD must have exactly one interior maximum, found {len(maxima)}"
            )

    def _raw(self, n):
        return ((self.a * n + self.b) * n + self.c) * n

    def _second_derivative(self, n):
        return 6.0 * self.a * n + 2.0 * self.b

    def derivative(self, n):
        return (3.0 * self.a * n + 2.0 * self.b) * n + self.c

    def _stationary_points(self):
        coeffs = [3.0 * self.a, 2.0 * self.b, self.c]
        if self.a == 0.0:
            coeffs = coeffs[1:]
        roots = np.roots(coeffs)
        real = roots[np.abs(roots.imag) < 1e-12].real
        return sorted(float(r) for r in real if 0.0 < r < self.n_jam)

    def outflow(self, n):
        """Outflow in veh/s, clamped at zero. Raises outside ``[0, n_jam]``."""
        arr = np.asarray(n, dtype=float)
        if np.any(arr < 0) or np.any(arr > self.n_jam):
            raise DomainError(f"accumulation outside [0, {self.n_jam}]")
        out = np.maximum(self._raw(arr), 0.0)
        return float(out) if out.ndim == 0 else out

    def outflow_clamped(self, n):
        """Outflow with the accumulation clipped into ``[0, n_jam]``."""
        arr = np.clip(np.asarray(n, dtype=float), 0.0, self.n_jam)
        out = np.maximum(self._raw(arr), 0.0)
        return float(out) if out.ndim == 0 else out

    @cached_property
    def critical(self) -> tuple[float, float]:
        """``(argmax, max)`` of the outflow on ``[0, n_jam]``."""
        candidates = [0.0, self.n_jam, *self._stationary_points()]
        values = [float(self._raw(x)) for x in candidates]
        i = int(np.argmax(values))
        return candidates[i], values[i]


def mfd_outflow(mfd: MfdPolynomial, n):
    return mfd.outflow(n)


def critical_accumulation(mfd: MfdPolynomial) -> float:
    return mfd.critical[0]


@dataclass(frozen=True)
class PwaMfd:
    """Concave piecewise-affine MFD, evaluated as the minimum of its lines."""

    slopes: np.ndarray
    intercepts: np.ndarray

    def __len__(self):
        return len(self.slopes)

    def __call__(self, n):
        arr = np.asarray(n, dtype=float)
        vals = np.min(np.multiply.outer(arr, self.slopes) + self.intercepts, axis=-1)
        return float(vals) if vals.ndim == 0 else vals


def _hull_tangent_point(mfd: MfdPolynomial) -> float:
    """Abscissa where the concave majorant leaves the curve for a chord to jam.

    Equals ``n_jam`` when the polynomial is concave on the whole domain.
    """
    a, b, c, jam = mfd.a, mfd.b, mfd.c, mfd.n_jam
    if a <= 0 or -b / (3 * a) >= jam:
        return jam
    inflection = -b / (3 * a)
    g_jam = float(mfd._raw(jam))
    # G(t) + G'(t) (jam - t) - G(jam) = 0, expanded as a cubic in t
    poly = np.array([-2 * a, 3 * a * jam - b, 2 * b * jam, c * jam - g_jam])
    roots = np.roots(poly)
    real = [float(r.real) for r in roots if abs(r.imag) < 1e-9 and 0 <= r.real <= inflection]
    if not real:
        raise ConfigurationError("could not locate the concave-hull tangent point")
    return max(real)


def pwa_approximate(mfd: MfdPolynomial, l_count: int) -> PwaMfd:
    """Tangent lines of the MFD's concave majorant at equally spaced abscissae.

    Past the hull tangent point the majorant is the chord to ``(n_jam, G(n_jam))``;
    abscissae there all map onto that single chord.
    """
    if l_count < 2:
        raise ValueError("l_count must be at least 2")
    t_star = _hull_tangent_point(mfd)
    g_jam = float(mfd._raw(mfd.n_jam))
    lines = []
    for x in np.linspace(0.0, mfd.n_jam, l_count):
        if x <= t_star:
            slope = float(mfd.derivative(x))
            icpt = float(mfd._raw(x)) - slope * x
        else:
            slope = (g_jam - float(mfd._raw(t_star))) / (mfd.n_jam - t_star)
            icpt = g_jam - slope * mfd.n_jam
        if not lines or (slope, icpt) != lines[-1]:
            lines.append((slope, icpt))
    slopes, icpts = map(np.array, zip(*lines))
    return PwaMfd(slopes, icpts)


@dataclass(frozen=True)
class RegionParams:
    mfd: MfdPolynomial
    avg_trip_length: float
    capacity_max: float
    area: float = 0.0
    n_detectors: int = 0
    network_length: float = 0.0

    def __post_init__(self):
        if self.avg_trip_length <= 0:
            raise ConfigurationError("avg_trip_length must be positive")
        if self.capacity_max <= 0:
            raise ConfigurationError("capacity_max must be positive")

    @property
    def n_jam(self) -> float:
        return self.mfd.n_jam

    @property
    def n_crit(self) -> float:
        return self.mfd.critical[0]


def boundary_capacity(params: RegionParams, n_h: float) -> float:
    """Receiving capacity of a region: flat up to critical, linear to zero at jam."""
    if n_h < 0 or n_h > params.n_jam:
        raise DomainError(f"accumulation {n_h} outside [0, {params.n_jam}]")
    return _capacity(params, n_h)


def _capacity(params: RegionParams, n_h: float) -> float:
    crit, jam = params.n_crit, params.n_jam
    if n_h <= crit:
        return params.capacity_max
    if n_h >= jam:
        return 0.0
    return params.capacity_max * (jam - n_h) / (jam - crit)


class Topology:
    """Symmetric region adjacency over ids ``1..K``."""

    def __init__(self, k: int, edges):
        if k < 2:
            raise ConfigurationError("need at least two regions")
        adj = np.zeros((k, k), dtype=bool)
        for i, h in edges:
            if not (1 <= i <= k and 1 <= h <= k):
                raise ConfigurationError(f"edge ({i}, {h}) references an unknown region")
            if i == h:
                raise ConfigurationError(f"self-adjacency for region {i}")
            adj[i - 1, h - 1] = adj[h - 1, i - 1] = True
        empty = [i + 1 for i in range(k) if not adj[i].any()]
        if empty:
            raise ConfigurationError(f"regions without neighbours: {empty}")
        self.k = k
        self.adjacency = adj

    @classmethod
    def complete(cls, k: int) -> "Topology":
        return cls(k, [(i, h) for i in range(1, k + 1) for h in range(i + 1, k + 1)])

    def neighbors(self, i: int) -> list[int]:
        return [int(h) + 1 for h in np.flatnonzero(self.adjacency[i - 1])]

    def adjacent(self, i: int, h: int) -> bool:
        return bool(self.adjacency[i - 1, h - 1])

    def __eq__(self, other):
        return isinstance(other, Topology) and np.array_equal(self.adjacency, other.adjacency)


def path_allowed(topology: Topology, i: int, h: int, j: int) -> bool:
    """Internal trips stay put; other trips leave through a neighbour."""
    if i == j:
        return h == i
    return h != i and topology.adjacent(i, h)


def allowed_stopovers(topology: Topology, i: int, j: int) -> list[int]:
    if i == j:
        raise ValueError("origin equals destination; internal trips have no stop-over")
    return [h for h in topology.neighbors(i) if path_allowed(topology, i, h, j)]


@dataclass
class NetworkSpec:
    regions: list[RegionParams]
    topology: Topology
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.regions) != self.topology.k:
            raise ConfigurationError("region count does not match topology size")
        if not self.names:
            self.names = [f"R{i}" for i in self.ids]

    @property
    def k(self) -> int:
        return self.topology.k

    @property
    def ids(self) -> list[int]:
        return list(range(1, self.k + 1))

    def region(self, i: int) -> RegionParams:
        return self.regions[i - 1]

    @cached_property
    def triples(self) -> list[tuple[int, int, int]]:
        """Allowed ``(I, H, J)`` with ``I != J``, ordered by origin, destination, stop-over."""
        out = []
        for i, j in product(self.ids, self.ids):
            if i != j:
                out.extend((i, h, j) for h in allowed_stopovers(self.topology, i, j))
        for i, j in product(self.ids, self.ids):
            if i != j and not allowed_stopovers(self.topology, i, j):
                raise ConfigurationError(f"destination {j} unreachable from {i}")
        return out

    @cached_property
    def border_pairs(self) -> list[tuple[int, int]]:
        """Ordered adjacent pairs ``(I, H)``; these carry the tolls."""
        return [(i, h) for i in self.ids for h in self.topology.neighbors(i)]

    @cached_property
    def n_crit(self) -> np.ndarray:
        return np.array([r.n_crit for r in self.regions])

    @cached_property
    def n_jam(self) -> np.ndarray:
        return np.array([r.n_jam for r in self.regions])

    def outflows(self, totals: np.ndarray) -> np.ndarray:
        return np.array([r.mfd.outflow_clamped(n) for r, n in zip(self.regions, totals)])

    def capacities(self, totals: np.ndarray) -> np.ndarray:
        return np.array(
            [_capacity(r, min(max(n, 0.0), r.n_jam)) for r, n in zip(self.regions, totals)]
        )

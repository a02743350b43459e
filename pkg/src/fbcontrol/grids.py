"""Time/space grids and the piecewise-linear field interpolant.

All value fields live on a ``GridPair``: a uniform time partition of
``[0, T]`` tensored with a truncated uniform space lattice.  Conditional
expectations beyond one step evaluate fields between nodes through
``LinearField``, which interpolates linearly inside the lattice and
extrapolates linearly from the two boundary nodes outside it (value
fields have at most linear growth, so linear tails are the consistent
choice).  Extrapolation is logged, never fatal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class GridPair:
    """Uniform time partition and truncated space lattice."""

    times: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", nodes)
        if times.ndim != 1 or times.size < 2:
            raise InputError("time partition needs at least two points")
        if nodes.ndim != 1 or nodes.size < 3:
            raise InputError("space lattice needs at least three nodes")
        if np.any(np.diff(times) <= 0) or np.any(np.diff(nodes) <= 0):
            raise InputError("grid coordinates must be strictly increasing")
        dts = np.diff(times)
        dxs = np.diff(nodes)
        if np.ptp(dts) > 1e-9 * dts[0] or np.ptp(dxs) > 1e-9 * dxs[0]:
            raise InputError("grids must be uniform")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def dx(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @classmethod
    def build(cls, horizon: float, delta: float, box: tuple[float, float],
              dx: float, t0: float = 0.0) -> "GridPair":
        """Build a grid with step sizes at most ``delta`` / ``dx`` that hit
        the horizon and box edges exactly."""
        if horizon <= t0 or delta <= 0 or dx <= 0:
            raise InputError("horizon and step sizes must be positive")
        lo, hi = float(box[0]), float(box[1])
        if hi <= lo:
            raise InputError("truncation box must have positive width")
        n_t = max(1, int(np.ceil((horizon - t0) / delta - 1e-12)))
        n_x = max(2, int(np.ceil((hi - lo) / dx - 1e-12)))
        return cls(times=np.linspace(t0, horizon, n_t + 1),
                   nodes=np.linspace(lo, hi, n_x + 1))

    def with_delta(self, delta: float) -> "GridPair":
        return GridPair.build(self.horizon, delta,
                              (float(self.nodes[0]), float(self.nodes[-1])),
                              self.dx, t0=float(self.times[0]))


def default_box(x_center: float, horizon: float, sigma_max: float) -> tuple[float, float]:
    """Default truncation box: wide enough that the reachable mass of the
    forward diffusion started at ``x_center`` stays interior."""
    half = 4.0 * (1.0 + abs(x_center)) * np.sqrt(horizon) * max(sigma_max, 1e-12)
    return (x_center - half, x_center + half)


@dataclass
class ExtrapolationLog:
    """Counts field evaluations outside the truncation box."""

    count: int = 0
    max_excursion: float = 0.0

    def merge(self, other: "ExtrapolationLog") -> None:
        self.count += other.count
        self.max_excursion = max(self.max_excursion, other.max_excursion)


@dataclass
class LinearField:
    """Piecewise-linear interpolant of a sampled field with linear tails.

    Exact on affine data, including outside the lattice.  Every evaluation
    outside ``[nodes[0], nodes[-1]]`` is recorded in ``log``.
    """

    nodes: np.ndarray
    values: np.ndarray
    log: ExtrapolationLog = field(default_factory=ExtrapolationLog)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes.shape != self.values.shape or self.nodes.ndim != 1:
            raise InputError("field samples must match the lattice")
        self._slope_lo = (self.values[1] - self.values[0]) / (self.nodes[1] - self.nodes[0])
        self._slope_hi = (self.values[-1] - self.values[-2]) / (self.nodes[-1] - self.nodes[-2])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.nodes, self.values)
        lo, hi = self.nodes[0], self.nodes[-1]
        below = x < lo
        above = x > hi
        n_out = int(np.count_nonzero(below) + np.count_nonzero(above))
        if n_out:
            out = np.where(below, self.values[0] + (x - lo) * self._slope_lo, out)
            out = np.where(above, self.values[-1] + (x - hi) * self._slope_hi, out)
            self.log.count += n_out
            exc = 0.0
            if np.any(below):
                exc = float(np.max(lo - x[below]))
            if np.any(above):
                exc = max(exc, float(np.max(x[above] - hi)))
            self.log.max_excursion = max(self.log.max_excursion, exc)
        return out if out.ndim else float(out)

"""Sampled value fields, feedback policies, and solver diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .grids import LinearField


@dataclass
class SolveReport:
    """Convergence diagnostics attached to every solver output."""

    solver: str
    steps: int = 0
    max_sweeps: int = 0
    total_sweeps: int = 0
    max_contraction_ratio: float = 0.0
    extrapolation_count: int = 0
    extrapolation_max_excursion: float = 0.0
    clamp_count: int = 0
    clamp_fraction: float = 0.0
    max_algebraic_residual: float = 0.0
    max_continuation_levels: int = 0
    min_applied_dt: float = 0.0
    max_cfl_number: float = 0.0
    cfl_refined_steps: int = 0
    notes: list = field(default_factory=list)
    per_slice: list = field(default_factory=list)

    def record_sweeps(self, sweeps: int, ratio: float) -> None:
        self.total_sweeps += int(sweeps)
        self.max_sweeps = max(self.max_sweeps, int(sweeps))
        self.max_contraction_ratio = max(self.max_contraction_ratio, float(ratio))

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "steps": self.steps,
            "max_sweeps": self.max_sweeps,
            "total_sweeps": self.total_sweeps,
            "max_contraction_ratio": self.max_contraction_ratio,
            "extrapolation_count": self.extrapolation_count,
            "extrapolation_max_excursion": self.extrapolation_max_excursion,
            "clamp_count": self.clamp_count,
            "clamp_fraction": self.clamp_fraction,
            "max_algebraic_residual": self.max_algebraic_residual,
            "max_continuation_levels": self.max_continuation_levels,
            "min_applied_dt": self.min_applied_dt,
            "max_cfl_number": self.max_cfl_number,
            "cfl_refined_steps": self.cfl_refined_steps,
            "notes": list(self.notes),
            "per_slice": list(self.per_slice),
        }


@dataclass
class ValueField:
    """One time slice of a sampled real field W(t_i, .) on the space
    lattice, optionally carrying the companion samples V(t_i, .) of the
    algebraic-coupled case."""

    index: int
    time: float
    nodes: np.ndarray
    values: np.ndarray
    companion: np.ndarray | None = None

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes.shape != self.values.shape:
            raise InputError("field samples must match the lattice")
        if np.any(np.diff(self.nodes) <= 0):
            raise InputError("lattice must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise InputError(f"non-finite field samples at slice {self.index}")
        if self.companion is not None:
            self.companion = np.asarray(self.companion, dtype=float)
            if self.companion.shape != self.values.shape:
                raise InputError("companion samples must match the lattice")

    def interpolant(self) -> LinearField:
        return LinearField(self.nodes, self.values)


class FieldSet:
    """Sequence of ValueField slices (ascending in time) with the run's
    SolveReport attached."""

    def __init__(self, fields: list[ValueField], report: SolveReport):
        self.fields = list(fields)
        self.report = report

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    @property
    def times(self) -> np.ndarray:
        return np.array([f.time for f in self.fields])

    @property
    def nodes(self) -> np.ndarray:
        return self.fields[0].nodes

    def matrix(self) -> np.ndarray:
        """(n_times, n_nodes) array of the field samples."""
        return np.stack([f.values for f in self.fields])

    def companion_matrix(self) -> np.ndarray | None:
        if self.fields[0].companion is None:
            return None
        return np.stack([f.companion for f in self.fields])


@dataclass
class PolicyField:
    """Argmax control index per node per time step (the witness of the
    per-step supremum).  ``times`` holds the step left endpoints."""

    times: np.ndarray
    nodes: np.ndarray
    indices: np.ndarray
    control_set: tuple

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.indices = np.asarray(self.indices, dtype=int)
        if self.indices.shape != (self.times.size, self.nodes.size):
            raise InputError("policy indices must be (n_steps, n_nodes)")
        if self.indices.min() < 0 or self.indices.max() >= len(self.control_set):
            raise InputError("policy indices out of range of the control set")

    def controls_at_step(self, i: int) -> np.ndarray:
        values = np.asarray(self.control_set, dtype=float)
        return values[self.indices[i]]

    def as_policy(self):
        """Feedback policy callable (t, x) -> control values, by nearest
        grid lookup (policies are piecewise constant per step and node)."""
        values = np.asarray(self.control_set, dtype=float)

        def policy(t, x):
            i = int(np.clip(np.searchsorted(self.times, t + 1e-12) - 1, 0, self.times.size - 1))
            k = np.clip(np.searchsorted(self.nodes, np.asarray(x, dtype=float)) - 0,
                        0, self.nodes.size - 1)
            k = np.asarray(k, dtype=int)
            # snap to the nearer of the two bracketing nodes
            k_lo = np.clip(k - 1, 0, self.nodes.size - 1)
            use_lo = np.abs(np.asarray(x) - self.nodes[k_lo]) <= np.abs(np.asarray(x) - self.nodes[k])
            k = np.where(use_lo, k_lo, k)
            return values[self.indices[i, k]]

        return policy

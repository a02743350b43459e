"""Backward dynamic programming over the discretized control set.

One backward step realizes the dynamic programming principle: the value
field at t_i is, nodewise, the maximum over the finite control set of
the one-step backward-semigroup value with the interpolated field at
t_{i+1} as terminal data.  Controls are piecewise constant per step and
node; the argmax witness is recorded as a ``PolicyField`` (lowest
control index on ties, for reproducibility).  The terminal slice is the
terminal evaluator exactly, with no smoothing.

Slices are strictly sequential (backward induction is a data
dependency); within a slice the per-node solves are independent and are
evaluated as one vectorized batch per control.
"""

from __future__ import annotations

import numpy as np

from . import fbsde, model
from .errors import InputError, StepTooLargeError
from .fields import FieldSet, PolicyField, SolveReport, ValueField
from .grids import GridPair, LinearField


def value_function_dpp(problem, grids: GridPair,
                       lattice: fbsde.NoiseLattice | None = None,
                       tolerance: float = 1e-10,
                       max_iter: int = 200,
                       delta0: float | None = None,
                       enforce_step: bool = True) -> tuple[FieldSet, PolicyField]:
    """Value fields W(t_i, .) and the per-step argmax policy.

    The grid time step must not exceed the admissible contraction bound;
    unless ``delta0`` is supplied it is probed via
    :func:`fbcontrol.model.contraction_step_bound` at the far edge of the
    truncation box with the terminal evaluator.  A too-large step raises
    :class:`StepTooLargeError` carrying the admissible bound (callers may
    auto-shrink and re-grid).
    """
    if lattice is None:
        lattice = fbsde.NoiseLattice.trinomial(1)
    if not problem.control_set:
        raise InputError("control set must be nonempty")
    nodes = grids.nodes
    delta = grids.dt
    if enforce_step:
        probe_x = float(nodes[np.argmax(np.abs(nodes))])
        d0 = delta0 if delta0 is not None else model.contraction_step_bound(
            problem, problem.phi, probe_x, delta, lattice=lattice, tolerance=tolerance)
        if delta > d0 * (1 + 1e-12):
            raise StepTooLargeError(
                f"DPP step {delta:g} exceeds the admissible contraction bound {d0:g}",
                delta0=d0)

    n_t = grids.times.size
    report = SolveReport(solver="dpp-lattice", steps=n_t - 1)
    report.min_applied_dt = delta
    values = np.asarray(problem.phi(nodes), dtype=float)
    fields = [ValueField(index=n_t - 1, time=float(grids.times[-1]),
                         nodes=nodes, values=values)]
    policy_idx = np.zeros((n_t - 1, nodes.size), dtype=int)

    for i in range(n_t - 2, -1, -1):
        t_i = float(grids.times[i])
        interp = LinearField(nodes, fields[-1].values)
        best = None
        best_idx = None
        slice_sweeps = 0
        slice_ratio = 0.0
        for j, u in enumerate(problem.control_set):
            Y, _, _, sweeps, _, weighted_hist = fbsde._picard_batch(
                problem, t_i, nodes, delta, u, interp, lattice, tolerance, max_iter)
            slice_sweeps = max(slice_sweeps, sweeps)
            slice_ratio = max(slice_ratio, fbsde._ratio_from_history(weighted_hist))
            if best is None:
                best = Y
                best_idx = np.zeros(nodes.size, dtype=int)
            else:
                better = Y > best  # strict: ties keep the lowest index
                best = np.where(better, Y, best)
                best_idx = np.where(better, j, best_idx)
        report.record_sweeps(slice_sweeps, slice_ratio)
        report.extrapolation_count += interp.log.count
        report.extrapolation_max_excursion = max(report.extrapolation_max_excursion,
                                                 interp.log.max_excursion)
        report.per_slice.append({"index": i, "time": t_i, "sweeps": slice_sweeps,
                                 "ratio": slice_ratio})
        policy_idx[i] = best_idx
        fields.append(ValueField(index=i, time=t_i, nodes=nodes, values=best))

    fields.reverse()
    report.per_slice.reverse()
    policy = PolicyField(times=grids.times[:-1], nodes=nodes,
                         indices=policy_idx, control_set=problem.control_set)
    return FieldSet(fields, report), policy


def evaluate_policy(problem, policy: PolicyField, grids: GridPair,
                    lattice: fbsde.NoiseLattice | None = None,
                    tolerance: float = 1e-10,
                    max_iter: int = 200,
                    delta0: float | None = None,
                    enforce_step: bool = True) -> FieldSet:
    """Cost fields J(t_i, .) of a frozen feedback policy, via the
    fixed-control backward induction."""
    if policy.indices.shape != (grids.times.size - 1, grids.nodes.size):
        raise InputError("policy shape does not match the grids")
    return fbsde.solve_fixed_control(problem, policy.as_policy(), grids,
                                     problem.phi, lattice, tolerance, max_iter,
                                     delta0=delta0, enforce_step=enforce_step)

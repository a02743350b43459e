"""Explicit finite-difference solvers for the two HJB forms.

Case 1 (diffusion depends on the control, not on z): backward explicit
Euler with central differences on

    dW/dt + max_u { p b(t,x,W,z*,u) + (1/2) sigma^2(t,x,W,u) M
                    + f(t,x,W,z*,u) } = 0,     W(T, .) = phi,

where p and M are the discrete first and second space derivatives and
the z argument of b and f is z* = p * sigma(t,x,W,u).  Contracting the
gradient with the diffusion is the load-bearing reading of the
Hamiltonian's z slot; it is what the semigroup expansion of the value
function produces, and it is what makes the preset's stated PDE drop
out exactly (see ``hamiltonian_case1``'s tests).

Case 2 (diffusion depends on z, not on the control): each node of each
backward step first solves the scalar algebraic equation

    V = a * sigma(t, x, W, V),      a = max(p, 0),

via :mod:`fbcontrol.algebraic`, then steps the same explicit update with
(W, V) in the coefficient slots.  The clamp a = max(p, 0) keeps the
algebraic solve within its sign condition; the true value field is
monotone in the G direction, so negative discrete gradients are
boundary/discretization noise.  Clamp events are counted and must
vanish under refinement on the presets.

Boundary handling everywhere: ghost nodes by linear extrapolation, which
makes the first difference one-sided and the second difference zero at
the two edge nodes (consistent with the value function's linear growth).

Stability: the configured time step is CFL-gated against the terminal
slice before any stepping; because the diffusion magnitude depends on
the solution, each applied step is additionally refined so that
dt <= theta dx^2 / max|sigma|^2 holds at every step (refinements are
logged in the report).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algebraic
from .errors import BlowUpError, ConfigError, InputError
from .fields import FieldSet, SolveReport, ValueField
from .grids import GridPair


@dataclass(frozen=True)
class FdScheme:
    """Finite-difference scheme parameters.

    ``dt`` is the largest time step the solver may apply; it must pass
    the CFL prescan dt <= theta dx^2 / max|sigma sigma^T| on the terminal
    slice, and is refined adaptively when the solution enlarges the
    diffusion mid-run.
    """

    dx: float
    dt: float
    theta: float = 0.9

    def __post_init__(self):
        if self.dx <= 0 or self.dt <= 0:
            raise ConfigError("scheme steps must be positive")
        if not 0 < self.theta <= 1:
            raise ConfigError("CFL safety factor must lie in (0, 1]")

    def cfl_bound(self, sigma_sq_max: float) -> float:
        if sigma_sq_max <= 0:
            return np.inf
        return self.theta * self.dx ** 2 / sigma_sq_max


def hamiltonian_case1(problem, t, x, w, p, M, u):
    """Control-indexed Hamiltonian integrand of the control-dependent-
    diffusion case, with the gradient contracted into the z slot:
    z* = p * sigma(t, x, w, u)."""
    if problem.sigma_depends_on_z:
        raise InputError("case-1 Hamiltonian requires sigma independent of z")
    ss = problem.sigma(t, x, w, 0.0, u)
    zstar = p * ss
    bb = problem.b(t, x, w, zstar, u)
    ff = problem.f(t, x, w, zstar, u)
    return p * bb + 0.5 * ss * ss * M + ff


def _derivatives(values: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Central first/second differences interior; linear-extrapolation
    ghosts make the edges one-sided first and zero second difference."""
    p = np.empty_like(values)
    p[1:-1] = (values[2:] - values[:-2]) / (2.0 * dx)
    p[0] = (values[1] - values[0]) / dx
    p[-1] = (values[-1] - values[-2]) / dx
    M = np.zeros_like(values)
    M[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / dx ** 2
    return p, M


def _case1_h_and_sigma_sq(problem, t, xs, W, p, M, controls):
    U = controls[:, None]
    ss = np.broadcast_to(np.asarray(problem.sigma(t, xs, W, 0.0, U), dtype=float),
                         (controls.size, xs.size))
    zstar = p[None, :] * ss
    bb = problem.b(t, xs, W, zstar, U)
    ff = problem.f(t, xs, W, zstar, U)
    h_all = p[None, :] * bb + 0.5 * ss * ss * M[None, :] + ff
    return h_all.max(axis=0), float(np.max(ss * ss))


def _case2_v(problem, t, xs, W, p, config):
    """Clamped gradient weight and the algebraic solution V at one slice."""
    a = np.maximum(p, 0.0)
    clamps = int(np.count_nonzero(p < 0))
    u0 = problem.control_set[0]  # sigma does not depend on u in this case

    def sigma1(zv):
        return np.asarray(problem.sigma(t, xs, W, zv, u0), dtype=float)

    sol = algebraic.solve_batch(a, sigma1, np.zeros_like(a), problem.L_sigma, config)
    return a, np.asarray(sol.z, dtype=float), sol, clamps


def _case2_h_and_sigma_sq(problem, t, xs, W, V, p, M, controls):
    u0 = problem.control_set[0]
    ss = np.asarray(problem.sigma(t, xs, W, V, u0), dtype=float)
    ss = np.broadcast_to(ss, xs.shape)
    U = controls[:, None]
    bb = problem.b(t, xs, W, V, U)
    ff = problem.f(t, xs, W, V, U)
    h_all = p[None, :] * bb + ff
    return h_all.max(axis=0) + 0.5 * ss * ss * M, float(np.max(ss * ss))


def terminal_cfl_dt(problem, grids: GridPair, theta: float = 0.9,
                    config: algebraic.AlgebraicConfig | None = None) -> float:
    """Largest time step passing the CFL prescan on the terminal slice;
    a convenient default for ``FdScheme.dt``."""
    xs = grids.nodes
    W = np.asarray(problem.phi(xs), dtype=float)
    p, M = _derivatives(W, grids.dx)
    controls = np.asarray(problem.control_set, dtype=float)
    if problem.sigma_depends_on_z:
        if config is None:
            config = algebraic.AlgebraicConfig()
        _, V, _, _ = _case2_v(problem, float(grids.times[-1]), xs, W, p, config)
        _, sigma_sq_max = _case2_h_and_sigma_sq(problem, float(grids.times[-1]),
                                                xs, W, V, p, M, controls)
    else:
        _, sigma_sq_max = _case1_h_and_sigma_sq(problem, float(grids.times[-1]),
                                                xs, W, p, M, controls)
    scheme = FdScheme(dx=grids.dx, dt=1.0, theta=theta)
    bound = scheme.cfl_bound(sigma_sq_max)
    return float(min(bound, grids.dt))


def algebraic_residuals(problem, field: ValueField,
                        config: algebraic.AlgebraicConfig | None = None) -> np.ndarray:
    """Residual |V - a sigma(t, x, W, V)| of a stored slice, recomputed
    from the serialized samples alone (a is the clamped discrete
    gradient of the stored W)."""
    if field.companion is None:
        raise InputError("slice carries no companion samples")
    dx = float(field.nodes[1] - field.nodes[0])
    p, _ = _derivatives(field.values, dx)
    a = np.maximum(p, 0.0)
    u0 = problem.control_set[0]
    ss = np.asarray(problem.sigma(field.time, field.nodes, field.values,
                                  field.companion, u0), dtype=float)
    return np.abs(field.companion - a * ss)


def _march(problem, grids: GridPair, scheme: FdScheme, report: SolveReport,
           slice_fn):
    """Shared backward march: between recorded slices, apply explicit
    steps of size min(scheme.dt, CFL bound, remainder)."""
    xs = grids.nodes
    if abs(scheme.dx - grids.dx) > 1e-9 * grids.dx:
        raise ConfigError("scheme dx must match the grid lattice spacing")
    times = grids.times
    W = np.asarray(problem.phi(xs), dtype=float)

    # prescan on the terminal slice gates the configured dt before stepping
    _, _, sigma_sq_max = slice_fn(float(times[-1]), W, record=True)
    bound = scheme.cfl_bound(sigma_sq_max)
    if scheme.dt > bound * (1 + 1e-12):
        raise ConfigError(
            f"CFL violation: scheme dt {scheme.dt:g} exceeds "
            f"theta*dx^2/max|sigma|^2 = {bound:g} on the terminal slice")

    report.min_applied_dt = scheme.dt
    fields_desc = []
    for i in range(times.size - 2, -1, -1):
        remaining = float(times[i + 1] - times[i])
        t_now = float(times[i + 1])
        while remaining > 1e-15:
            H, _, sigma_sq_max = slice_fn(t_now, W, record=False)
            bound = scheme.cfl_bound(sigma_sq_max)
            dt_step = min(scheme.dt, bound, remaining)
            if dt_step < scheme.dt * (1 - 1e-12):
                if dt_step < remaining * (1 - 1e-12):
                    report.cfl_refined_steps += 1
            report.min_applied_dt = min(report.min_applied_dt, dt_step)
            if np.isfinite(bound):
                report.max_cfl_number = max(report.max_cfl_number, dt_step / bound * scheme.theta)
            W = W + dt_step * H
            report.steps += 1
            if not np.all(np.isfinite(W)):
                raise BlowUpError(f"non-finite field while stepping toward slice {i}",
                                  slice_index=i)
            t_now -= dt_step
            remaining -= dt_step
        _, companion, _ = slice_fn(float(times[i]), W, record=True)
        fields_desc.append((i, float(times[i]), W.copy(), companion))
    return fields_desc


def solve_case1(problem, grids: GridPair, scheme: FdScheme) -> FieldSet:
    """Backward explicit scheme for the control-dependent-diffusion HJB;
    returns the fields at the grid's recording times."""
    if problem.sigma_depends_on_z:
        raise InputError("case-1 solver requires sigma independent of z")
    if problem.n != 1 or problem.d != 1:
        raise InputError("the finite-difference solvers implement n = d = 1")
    controls = np.asarray(problem.control_set, dtype=float)
    xs = grids.nodes
    report = SolveReport(solver="hjb-case1")

    def slice_fn(t, W, record):
        p, M = _derivatives(W, grids.dx)
        H, sigma_sq_max = _case1_h_and_sigma_sq(problem, t, xs, W, p, M, controls)
        return H, None, sigma_sq_max

    fields_desc = _march(problem, grids, scheme, report, slice_fn)
    fields = [ValueField(index=grids.times.size - 1, time=float(grids.times[-1]),
                         nodes=xs, values=np.asarray(problem.phi(xs), dtype=float))]
    fields.extend(ValueField(index=i, time=t, nodes=xs, values=W)
                  for i, t, W, _ in fields_desc)
    fields.sort(key=lambda f: f.index)
    return FieldSet(fields, report)


def solve_case2(problem, grids: GridPair, scheme: FdScheme,
                config: algebraic.AlgebraicConfig | None = None) -> FieldSet:
    """Backward explicit scheme for the z-dependent-diffusion HJB coupled
    nodewise to the algebraic equation; every returned slice carries the
    companion samples V."""
    if not problem.sigma_depends_on_z:
        raise InputError("case-2 solver requires sigma depending on z")
    if problem.sigma_depends_on_u:
        raise InputError("case-2 solver requires sigma independent of the control")
    if problem.n != 1 or problem.d != 1:
        raise InputError("the finite-difference solvers implement n = d = 1")
    if config is None:
        config = algebraic.AlgebraicConfig()
    controls = np.asarray(problem.control_set, dtype=float)
    xs = grids.nodes
    report = SolveReport(solver="hjb-case2")
    node_steps = [0]

    def slice_fn(t, W, record):
        p, M = _derivatives(W, grids.dx)
        try:
            a, V, sol, clamps = _case2_v(problem, t, xs, W, p, config)
        except Exception as exc:
            raise type(exc)(f"{exc} (slice at t={t:g})") from exc
        report.clamp_count += clamps
        node_steps[0] += xs.size
        report.max_algebraic_residual = max(report.max_algebraic_residual, sol.residual)
        report.max_continuation_levels = max(report.max_continuation_levels,
                                             sol.continuation_steps)
        H, sigma_sq_max = _case2_h_and_sigma_sq(problem, t, xs, W, V, p, M, controls)
        return H, V, sigma_sq_max

    fields_desc = _march(problem, grids, scheme, report, slice_fn)
    p_T, _ = _derivatives(np.asarray(problem.phi(xs), dtype=float), grids.dx)
    terminal_w = np.asarray(problem.phi(xs), dtype=float)
    _, v_T, _, _ = _case2_v(problem, float(grids.times[-1]), xs, terminal_w, p_T, config)
    fields = [ValueField(index=grids.times.size - 1, time=float(grids.times[-1]),
                         nodes=xs, values=terminal_w, companion=v_T)]
    fields.extend(ValueField(index=i, time=t, nodes=xs, values=W, companion=V)
                  for i, t, W, V in fields_desc)
    fields.sort(key=lambda f: f.index)
    if node_steps[0]:
        report.clamp_fraction = report.clamp_count / node_steps[0]
    return FieldSet(fields, report)

"""Short-interval solver for fully coupled forward-backward systems.

The Brownian increment over one step of length delta is replaced by a
moment-matched finite lattice (trinomial by default), so conditional
expectations are exact finite sums.  One step of the coupled system is
then solved by Picard iteration: with (Y, Z) frozen inside the
coefficients,

    X+_j = x + b(t,x,Y,Z,u) delta + sigma(t,x,Y,Z,u) sqrt(delta) xi_j
    Y'   = sum_j p_j psi(X+_j) + f(t,x,Y,Z,u) delta
    Z'   = sum_j p_j psi(X+_j) xi_j / sqrt(delta)

iterated until |Y'-Y| + |Z'-Z| falls below tolerance.  This mirrors the
decoupling map whose small-interval contraction guarantees unique
solvability; the step bound below which the sweep contracts at ratio
<= 1/2 is determined empirically by :func:`fbcontrol.model.contraction_step_bound`.

On top of the one-step solve sit the backward-semigroup evaluation
(``semigroup_apply``) and backward induction of cost fields for a fixed
feedback policy (``solve_fixed_control``).  All solvers here require
n = d = 1, the setting of the worked presets; the lattice type itself
supports general d.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import model
from .errors import InputError, NonContractionError, StepTooLargeError
from .fields import FieldSet, SolveReport, ValueField
from .grids import GridPair, LinearField

_SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class NoiseLattice:
    """Finite one-step surrogate for a Brownian increment: outcomes
    xi_j in R^d with probabilities p_j, moment-matched so that the mean
    is zero and the covariance is the identity."""

    outcomes: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        out = np.asarray(self.outcomes, dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "outcomes", out)
        object.__setattr__(self, "probabilities", p)
        if out.shape[0] != p.size or out.ndim != 2:
            raise InputError("outcomes and probabilities must align")
        if np.any(p < 0):
            raise InputError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-14:
            raise InputError("probabilities must sum to one")
        mean = p @ out
        cov = (out * p[:, None]).T @ out
        if np.max(np.abs(mean)) > 1e-14:
            raise InputError("lattice mean must vanish")
        if np.max(np.abs(cov - np.eye(out.shape[1]))) > 1e-14:
            raise InputError("lattice covariance must be the identity")

    @property
    def d(self) -> int:
        return self.outcomes.shape[1]

    @property
    def xi1(self) -> np.ndarray:
        """Outcomes as a flat vector (d = 1 only)."""
        if self.d != 1:
            raise InputError("xi1 is only defined for d = 1 lattices")
        return self.outcomes[:, 0]

    @classmethod
    def trinomial(cls, d: int = 1) -> "NoiseLattice":
        """Third-moment-matched default: outcomes {-sqrt(3), 0, +sqrt(3)}
        with probabilities {1/6, 2/3, 1/6}, tensored across d."""
        pts = np.array([-_SQRT3, 0.0, _SQRT3])
        pr = np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])
        if d == 1:
            return cls(pts, pr)
        combos = np.array(list(itertools.product(pts, repeat=d)))
        probs = np.array([np.prod(pr[[list(pts).index(c) for c in row]])
                          for row in combos])
        return cls(combos, probs)


@dataclass
class OneStepSolution:
    """Fixed point of one Picard-solved step."""

    y: float
    z: float
    successors: np.ndarray
    iterations: int
    final_update: float
    contraction_ratio: float
    update_history: tuple


def _ratio_from_history(history) -> float:
    if len(history) < 2:
        return 0.0
    tail = history[-3:]
    pairs = zip(tail[:-1], tail[1:]) if len(tail) >= 2 else []
    ratio = 0.0
    for prev, cur in pairs:
        if prev > 1e-300:
            ratio = max(ratio, cur / prev)
    return ratio


def _require_scalar_problem(problem) -> None:
    if problem.n != 1 or problem.d != 1:
        raise InputError("the lattice solvers require n = d = 1")


def _picard_batch(problem, t, xs, delta, u, psi, lattice, tolerance, max_iter):
    """Vectorized one-step Picard sweep over a batch of nodes.

    ``u`` may be a scalar control or an array broadcastable against
    ``xs``.  The stopping rule is the plain update norm
    max(|Y'-Y| + |Z'-Z|) <= tolerance; contraction diagnostics use the
    step-weighted norm |Y'-Y| + sqrt(delta) |Z'-Z|, the discrete analog
    of the norm in which the decoupling map contracts (Z responds O(1)
    to Y within one sweep, so the unweighted update norm oscillates even
    for convergent iterations).

    Returns (Y, Z, successors, iterations, stop_history, weighted_history).
    """
    _require_scalar_problem(problem)
    if delta <= 0:
        raise InputError("step size must be positive")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    xi = lattice.xi1
    w = lattice.probabilities
    sq = np.sqrt(delta)

    Y = np.atleast_1d(np.asarray(psi(xs), dtype=float)).astype(float).copy()
    if Y.shape != xs.shape:
        Y = np.broadcast_to(Y, xs.shape).astype(float)
    Z = np.zeros_like(xs)
    stop_hist: list[float] = []
    weighted_hist: list[float] = []
    successors = None
    for it in range(1, max_iter + 1):
        bb = np.asarray(problem.b(t, xs, Y, Z, u), dtype=float)
        ss = np.asarray(problem.sigma(t, xs, Y, Z, u), dtype=float)
        ff = np.asarray(problem.f(t, xs, Y, Z, u), dtype=float)
        if not (np.all(np.isfinite(bb)) and np.all(np.isfinite(ss)) and np.all(np.isfinite(ff))):
            raise InputError("non-finite coefficient value in one-step solve")
        bb, ss, ff = (np.broadcast_to(v, xs.shape) for v in (bb, ss, ff))
        successors = xs[:, None] + bb[:, None] * delta + ss[:, None] * sq * xi[None, :]
        pv = np.asarray(psi(successors.ravel()), dtype=float).reshape(successors.shape)
        Yn = pv @ w + ff * delta
        Zn = (pv * xi[None, :]) @ w / sq
        dy = np.abs(Yn - Y)
        dz = np.abs(Zn - Z)
        upd = float(np.max(dy + dz))
        upd_w = float(np.max(dy + sq * dz))
        Y, Z = Yn, Zn
        stop_hist.append(upd)
        weighted_hist.append(upd_w)
        if not np.isfinite(upd_w) or upd_w > 1e9 * (1.0 + weighted_hist[0]):
            raise NonContractionError(
                f"one-step Picard iteration diverged after {it} sweeps at "
                f"delta={delta:g} (step too large, or sigma's Lipschitz "
                "constant in z too large)")
        if upd <= tolerance:
            return Y, Z, successors, it, stop_hist, weighted_hist
    raise NonContractionError(
        f"one-step Picard iteration did not reach tolerance {tolerance:g} in "
        f"{max_iter} sweeps at delta={delta:g} (last update {stop_hist[-1]:.3e})")


def one_step_solve(problem, t: float, x: float, delta: float, u, psi,
                   lattice: NoiseLattice | None = None,
                   tolerance: float = 1e-10,
                   max_iter: int = 200) -> OneStepSolution:
    """Solve the coupled system over [t, t+delta] with terminal data
    ``psi`` evaluated at the forward endpoint; returns the time-t value
    and the diagnostics of the Picard iteration."""
    if lattice is None:
        lattice = NoiseLattice.trinomial(1)
    Y, Z, successors, iterations, stop_hist, weighted_hist = _picard_batch(
        problem, t, x, delta, u, psi, lattice, tolerance, max_iter)
    return OneStepSolution(
        y=float(Y[0]),
        z=float(Z[0]),
        successors=successors[0],
        iterations=iterations,
        final_update=stop_hist[-1],
        contraction_ratio=_ratio_from_history(weighted_hist),
        update_history=tuple(stop_hist),
    )


def _aux_grid(problem, t, x, delta_sub, substeps, u, psi) -> np.ndarray:
    """Per-call auxiliary lattice covering the reachable range of the
    forward state over ``substeps`` steps of size ``delta_sub``."""
    y0 = float(np.asarray(psi(np.atleast_1d(float(x))), dtype=float)[0])
    bb = float(np.asarray(problem.b(t, x, y0, 0.0, u), dtype=float))
    ss = float(np.asarray(problem.sigma(t, x, y0, 0.0, u), dtype=float))
    spread = abs(bb) * delta_sub + abs(ss) * np.sqrt(delta_sub) * _SQRT3
    radius = max(3.0 * substeps * spread, 1e-6 * (1.0 + abs(x)))
    count = max(33, 16 * substeps + 1)
    return np.linspace(x - radius, x + radius, count)


def semigroup_apply(problem, t: float, x: float, delta: float, u, psi,
                    substeps: int,
                    lattice: NoiseLattice | None = None,
                    tolerance: float = 1e-10,
                    max_iter: int = 200) -> float:
    """Time-t value of the backward semigroup over [t, t+delta] with
    terminal data ``psi``, computed by backward recursion over
    ``substeps`` equal subintervals.

    With substeps = 1 this is exactly ``one_step_solve(...).y``.  For
    more substeps the interior layers interpolate the next layer's
    values on a per-call auxiliary spatial grid.
    """
    if substeps < 1:
        raise InputError("substeps must be >= 1")
    if lattice is None:
        lattice = NoiseLattice.trinomial(1)
    if substeps == 1:
        return one_step_solve(problem, t, x, delta, u, psi, lattice,
                              tolerance, max_iter).y
    delta_sub = delta / substeps
    aux = _aux_grid(problem, t, x, delta_sub, substeps, u, psi)
    layer = np.asarray(psi(aux), dtype=float)
    for k in range(substeps - 1, 0, -1):
        interp = LinearField(aux, layer)
        layer, _, _, _, _, _ = _picard_batch(problem, t + k * delta_sub, aux,
                                             delta_sub, u, interp, lattice,
                                             tolerance, max_iter)
    interp = LinearField(aux, layer)
    return one_step_solve(problem, t, x, delta_sub, u, interp, lattice,
                          tolerance, max_iter).y


def solve_fixed_control(problem, policy, grids: GridPair, psi_T,
                        lattice: NoiseLattice | None = None,
                        tolerance: float = 1e-10,
                        max_iter: int = 200,
                        delta0: float | None = None,
                        enforce_step: bool = True) -> FieldSet:
    """Backward induction of the cost fields J(t_i, .) for a fixed
    feedback policy.

    ``policy`` is a callable (t, nodes) -> control value(s) broadcast
    over the nodes.  The terminal slice is ``psi_T`` exactly; every
    earlier slice is one lattice step with the interpolant of the next
    slice as terminal data.  Boundary extrapolation is logged in the
    report, never fatal.
    """
    if lattice is None:
        lattice = NoiseLattice.trinomial(1)
    _require_scalar_problem(problem)
    nodes = grids.nodes
    delta = grids.dt
    if enforce_step:
        probe_x = float(nodes[np.argmax(np.abs(nodes))])
        d0 = delta0 if delta0 is not None else model.contraction_step_bound(
            problem, psi_T, probe_x, delta, lattice=lattice, tolerance=tolerance)
        if delta > d0 * (1 + 1e-12):
            raise StepTooLargeError(
                f"grid step {delta:g} exceeds the admissible contraction bound "
                f"{d0:g}", delta0=d0)

    report = SolveReport(solver="fixed-control-lattice", steps=grids.times.size - 1)
    report.min_applied_dt = delta
    values = np.asarray(psi_T(nodes), dtype=float)
    fields = [ValueField(index=grids.times.size - 1, time=float(grids.times[-1]),
                         nodes=nodes, values=values)]
    for i in range(grids.times.size - 2, -1, -1):
        t_i = float(grids.times[i])
        interp = LinearField(nodes, fields[-1].values)
        u_i = policy(t_i, nodes)
        Y, _, _, sweeps, _, weighted_hist = _picard_batch(problem, t_i, nodes, delta,
                                                          u_i, interp, lattice,
                                                          tolerance, max_iter)
        ratio = _ratio_from_history(weighted_hist)
        report.record_sweeps(sweeps, ratio)
        report.extrapolation_count += interp.log.count
        report.extrapolation_max_excursion = max(report.extrapolation_max_excursion,
                                                 interp.log.max_excursion)
        report.per_slice.append({"index": i, "time": t_i, "sweeps": sweeps,
                                 "ratio": ratio})
        fields.append(ValueField(index=i, time=t_i, nodes=nodes, values=Y))
    fields.reverse()
    report.per_slice.reverse()
    return FieldSet(fields, report)


def lattice_tree_moments(problem, t: float, x: float, delta: float,
                         substeps: int, u, psi,
                         lattice: NoiseLattice | None = None,
                         tolerance: float = 1e-10) -> dict:
    """Discrete conditional moments over the full lattice tree on
    [t, t+delta] under a constant control.

    Expands every path of the ``substeps``-layer tree (3^substeps
    leaves), solving each node's step against the interpolated next
    layer, and returns the exact tree expectations of sup|X|^2,
    sup|X - x|^2, sup|Y|^2 and sum |Z|^2 dt, plus the root values.
    Intended for property checks; keep substeps small.
    """
    if substeps < 1 or substeps > 10:
        raise InputError("substeps must be in [1, 10] for tree expansion")
    if lattice is None:
        lattice = NoiseLattice.trinomial(1)
    delta_sub = delta / substeps
    aux = _aux_grid(problem, t, x, delta_sub, substeps, u, psi)
    layers = [np.asarray(psi(aux), dtype=float)]
    for k in range(substeps - 1, 0, -1):
        interp = LinearField(aux, layers[-1])
        vals, _, _, _, _, _ = _picard_batch(problem, t + k * delta_sub, aux,
                                            delta_sub, u, interp, lattice,
                                            tolerance, 200)
        layers.append(vals)
    layers.reverse()  # layers[k] = values at time t + (k+1)*delta_sub

    xi = lattice.xi1
    w = lattice.probabilities
    positions = np.array([float(x)])
    probs = np.array([1.0])
    sup_x = np.abs(positions)
    sup_dx = np.zeros(1)
    int_z2 = np.zeros(1)
    y_root = None
    z_root = None
    sup_y = None
    for k in range(substeps):
        if k < substeps - 1:
            interp = LinearField(aux, layers[k])
        else:
            interp = psi
        Y, Z, successors, _, _, _ = _picard_batch(problem, t + k * delta_sub,
                                                  positions, delta_sub, u,
                                                  interp, lattice, tolerance, 200)
        if k == 0:
            y_root = float(Y[0])
            z_root = float(Z[0])
            sup_y = np.abs(Y)
        else:
            sup_y = np.maximum(sup_y, np.abs(Y))
        int_z2 = int_z2 + np.abs(Z) ** 2 * delta_sub
        n_children = xi.size
        positions = successors.reshape(-1)
        probs = (probs[:, None] * w[None, :]).reshape(-1)
        sup_x = np.maximum(np.repeat(sup_x, n_children), np.abs(positions))
        sup_dx = np.maximum(np.repeat(sup_dx, n_children), np.abs(positions - x))
        int_z2 = np.repeat(int_z2, n_children)
        sup_y = np.repeat(sup_y, n_children)
    terminal = np.asarray(psi(positions), dtype=float)
    sup_y = np.maximum(sup_y, np.abs(terminal))
    return {
        "y0": y_root,
        "z0": z_root,
        "E_sup_x2": float(probs @ sup_x ** 2),
        "E_sup_dx2": float(probs @ sup_dx ** 2),
        "E_sup_y2": float(probs @ sup_y ** 2),
        "E_int_z2": float(probs @ int_z2),
    }

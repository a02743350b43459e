"""Executable property harness over solver outputs.

Each check recomputes its quantities from serialized fields (plus the
problem definition), so the harness audits solver outputs independently
of solver state.  Ordering checks assert only orderings, at an absolute
1e-8 (fixed-point tolerance dominates); quantitative constants are
fitted, never invented, and their stability across one refinement is the
acceptance-level statement.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import control, fbsde, hjb, model
from .errors import InputError
from .fields import FieldSet, PolicyField
from .grids import GridPair, LinearField

ORDERING_TOL = 1e-8


@dataclass
class CheckOutcome:
    """One pass/fail outcome; ``passed`` iff ``measured <= threshold``."""

    check_id: str
    passed: bool
    measured: float
    threshold: float
    witness: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v
        return {
            "check_id": self.check_id,
            "passed": bool(self.passed),
            "measured": clean(self.measured),
            "threshold": clean(self.threshold),
            "witness": {k: clean(v) for k, v in self.witness.items()},
            "details": {k: clean(v) for k, v in self.details.items()},
        }


def _outcome(check_id, measured, threshold, witness=None, details=None) -> CheckOutcome:
    return CheckOutcome(check_id=check_id,
                        passed=bool(measured <= threshold),
                        measured=float(measured), threshold=float(threshold),
                        witness=witness or {}, details=details or {})


def check_comparison(problem, phi1, phi2, grids: GridPair,
                     lattice: fbsde.NoiseLattice | None = None,
                     tolerance: float = 1e-10,
                     control_sweep: tuple | None = None,
                     delta0: float | None = None) -> CheckOutcome:
    """Ordered terminal data must give ordered backward values.

    Requires phi1 >= phi2 on the lattice (an input error otherwise, not a
    check failure).  Solves both problems for every control in the sweep
    and for the DPP value, and asserts Y1 >= Y2 - 1e-8 at every node and
    slice.  The fitted gap constant max(Y1 - Y2) / max(phi1 - phi2) is
    reported for stability tracking.
    """
    if lattice is None:
        lattice = fbsde.NoiseLattice.trinomial(1)
    nodes = grids.nodes
    d_phi = np.asarray(phi1(nodes), dtype=float) - np.asarray(phi2(nodes), dtype=float)
    if np.any(d_phi < 0):
        k = int(np.argmin(d_phi))
        raise InputError(f"phi1 < phi2 at node x={nodes[k]:g}; ordering precondition violated")
    eps = float(np.max(d_phi))

    p1 = dataclasses.replace(problem, phi=phi1)
    p2 = dataclasses.replace(problem, phi=phi2)
    if delta0 is None:
        probe_x = float(nodes[np.argmax(np.abs(nodes))])
        delta0 = model.contraction_step_bound(p1, phi1, probe_x, grids.dt,
                                              lattice=lattice, tolerance=tolerance)
    sweep = problem.control_set if control_sweep is None else tuple(control_sweep)

    worst = np.inf
    max_gap = -np.inf
    witness: dict = {}

    def scan(fields1, fields2, label):
        nonlocal worst, max_gap, witness
        diff = fields1.matrix() - fields2.matrix()
        i, k = np.unravel_index(np.argmin(diff), diff.shape)
        if diff[i, k] < worst:
            worst = float(diff[i, k])
            witness = {"run": label, "slice": int(i),
                       "time": float(fields1.times[i]), "node": float(nodes[k])}
        max_gap = max(max_gap, float(diff.max()))

    for u in sweep:
        policy = (lambda uu: (lambda t, x: uu))(u)
        j1 = fbsde.solve_fixed_control(p1, policy, grids, phi1, lattice,
                                       tolerance, delta0=delta0)
        j2 = fbsde.solve_fixed_control(p2, policy, grids, phi2, lattice,
                                       tolerance, delta0=delta0)
        scan(j1, j2, f"control={u}")
    w1, _ = control.value_function_dpp(p1, grids, lattice, tolerance, delta0=delta0)
    w2, _ = control.value_function_dpp(p2, grids, lattice, tolerance, delta0=delta0)
    scan(w1, w2, "dpp")

    fitted_c = max_gap / eps if eps > 0 else 0.0
    return _outcome("comparison-ordering", measured=-worst, threshold=ORDERING_TOL,
                    witness=witness,
                    details={"max_gap": max_gap, "epsilon": eps, "fitted_C": fitted_c,
                             "controls_swept": len(sweep) + 1})


def regularity_constants(fields) -> dict:
    """Fitted regularity constants of a field sequence: the Lipschitz-in-x
    ratio, the linear-growth constant, the worst monotonicity defect, and
    the time-increment constant over all slice pairs."""
    fields = list(fields)
    if len(fields) < 2 or fields[0].nodes.size < 3:
        raise InputError("regularity checks need >= 2 slices and >= 3 nodes")
    nodes = fields[0].nodes
    dx = float(nodes[1] - nodes[0])
    W = np.stack([f.values for f in fields])
    times = np.array([f.time for f in fields])

    increments = np.diff(W, axis=1)
    lip_x = float(np.max(np.abs(increments)) / dx)
    growth = float(np.max(np.abs(W) / (1.0 + np.abs(nodes))[None, :]))
    mono_defect = float(max(0.0, -np.min(increments)))

    time_c = 0.0
    weight = 1.0 + np.abs(nodes)
    for i in range(len(fields)):
        dtv = times[i + 1:] - times[i]
        if dtv.size == 0:
            continue
        dw = np.abs(W[i + 1:] - W[i][None, :]) / weight[None, :]
        time_c = max(time_c, float(np.max(dw / np.sqrt(dtv)[:, None])))
    return {"lipschitz_x": lip_x, "linear_growth": growth,
            "monotone_defect": mono_defect, "time_increment": time_c}


def check_regularity(fields, reference: dict | None = None,
                     drift_tol: float = 0.2,
                     monotone_tol: float = 1e-6) -> list[CheckOutcome]:
    """Regularity outcomes of a field sequence.

    Without a reference the quantitative constants are informational
    (monotonicity alone has the absolute -1e-6 gate); with ``reference``
    (the constants of a refined companion run) each constant must stay
    within ``drift_tol`` relative drift.
    """
    consts = regularity_constants(fields)
    outcomes = [
        _outcome("regularity-monotonicity", consts["monotone_defect"], monotone_tol,
                 details={"constant": consts["monotone_defect"]}),
    ]
    for key, check_id in (("lipschitz_x", "regularity-lipschitz-x"),
                          ("linear_growth", "regularity-linear-growth"),
                          ("time_increment", "regularity-time-increment")):
        c = consts[key]
        if reference is None:
            outcomes.append(_outcome(check_id, 0.0 if np.isfinite(c) else np.inf, 0.0,
                                     details={"constant": c}))
        else:
            ref = reference[key]
            drift = abs(c - ref) / ref if ref > 0 else (0.0 if c == 0 else np.inf)
            outcomes.append(_outcome(check_id, drift, drift_tol,
                                     details={"constant": c, "reference": ref}))
    return outcomes


def cross_validate(problem, grids_dpp: GridPair, grids_pde: GridPair,
                   lattice: fbsde.NoiseLattice | None = None,
                   scheme: hjb.FdScheme | None = None,
                   *,
                   algebraic_config=None,
                   budget: float = 0.05,
                   interior_fraction: float = 0.6,
                   exclude_nearest: int = 2,
                   tolerance: float = 1e-10,
                   delta0: float | None = None,
                   fields_dpp: FieldSet | None = None,
                   fields_hjb: FieldSet | None = None) -> CheckOutcome:
    """Max interior discrepancy between the dynamic-programming and
    finite-difference value fields.

    The two pipelines share nothing but the problem definition, so their
    agreement is the operational meaning of the value function solving
    the associated equation.  Compared on the inner ``interior_fraction``
    of the box, excluding the ``exclude_nearest`` slices closest to the
    horizon (where both equal the terminal data by construction).
    """
    if grids_dpp.times.size != grids_pde.times.size or \
            not np.allclose(grids_dpp.times, grids_pde.times):
        raise InputError("cross-validation requires identical recording times")
    if lattice is None:
        lattice = fbsde.NoiseLattice.trinomial(1)
    if scheme is None:
        scheme = hjb.FdScheme(dx=grids_pde.dx, dt=grids_dpp.dt)
    if fields_dpp is None:
        fields_dpp, _ = control.value_function_dpp(problem, grids_dpp, lattice,
                                                   tolerance, delta0=delta0)
    if fields_hjb is None:
        if problem.sigma_depends_on_z:
            fields_hjb = hjb.solve_case2(problem, grids_pde, scheme, algebraic_config)
        else:
            fields_hjb = hjb.solve_case1(problem, grids_pde, scheme)

    nodes = grids_dpp.nodes
    lo, hi = float(nodes[0]), float(nodes[-1])
    margin = 0.5 * (1.0 - interior_fraction) * (hi - lo)
    mask = (nodes >= lo + margin) & (nodes <= hi - margin)
    n_compare = len(fields_dpp) - exclude_nearest

    worst = -1.0
    witness: dict = {}
    for i in range(max(n_compare, 0)):
        wd = fields_dpp[i].values[mask]
        wh = np.interp(nodes[mask], fields_hjb[i].nodes, fields_hjb[i].values)
        diff = np.abs(wd - wh)
        k = int(np.argmax(diff))
        if diff[k] > worst:
            worst = float(diff[k])
            witness = {"slice": i, "time": float(fields_dpp[i].time),
                       "node": float(nodes[mask][k])}
    return _outcome("cross-validation", measured=worst, threshold=budget,
                    witness=witness,
                    details={"interior_fraction": interior_fraction,
                             "excluded_slices": exclude_nearest,
                             "nodes_compared": int(mask.sum())})


def interpolation_budget(fields) -> float:
    """Max adjacent-node increment over the slices: a Lipschitz-type bound
    on the piecewise-linear interpolation error of the stored fields."""
    return float(max(np.max(np.abs(np.diff(f.values))) for f in fields))


def check_flow_consistency(problem, policy, grids: GridPair,
                           lattice: fbsde.NoiseLattice | None = None,
                           *,
                           fields: FieldSet | None = None,
                           tolerance: float = 1e-10,
                           floor: float = ORDERING_TOL) -> CheckOutcome:
    """One semigroup step applied to each stored slice must reproduce the
    previous stored slice within the interpolation budget.

    Probes both the lattice nodes and the cell midpoints, so the check
    exercises the interpolant rather than replaying the solver's exact
    arithmetic; the threshold is the interpolation budget of the stored
    fields plus an absolute fixed-point floor.
    """
    if lattice is None:
        lattice = fbsde.NoiseLattice.trinomial(1)
    policy_fn = policy.as_policy() if isinstance(policy, PolicyField) else policy
    if fields is None:
        fields = fbsde.solve_fixed_control(problem, policy_fn, grids, problem.phi,
                                           lattice, tolerance)
    nodes = grids.nodes
    probes = np.sort(np.concatenate([nodes, 0.5 * (nodes[:-1] + nodes[1:])]))
    delta = grids.dt

    worst = -1.0
    witness: dict = {}
    for i in range(len(fields) - 1):
        t_i = float(fields[i].time)
        interp_next = LinearField(nodes, fields[i + 1].values)
        u_probe = policy_fn(t_i, probes)
        Y, _, _, _, _, _ = fbsde._picard_batch(problem, t_i, probes, delta, u_probe,
                                               interp_next, lattice, tolerance, 200)
        stored = LinearField(nodes, fields[i].values)(probes)
        dev = np.abs(Y - stored)
        k = int(np.argmax(dev))
        if dev[k] > worst:
            worst = float(dev[k])
            witness = {"slice": i, "time": t_i, "node": float(probes[k])}
    budget = interpolation_budget(fields) + floor
    return _outcome("flow-consistency", measured=worst, threshold=budget,
                    witness=witness,
                    details={"interpolation_budget": budget - floor, "floor": floor})

"""Control-problem definition and assumption validators.

A ``ControlProblem`` bundles the coefficient evaluators of a controlled
fully coupled forward-backward system

    dX = b(t, X, Y, Z, u) dt + sigma(t, X, Y, Z, u) dB
    dY = -f(t, X, Y, Z, u) dt + Z dB,      Y_T = phi(X_T)

together with the structural constants it claims to satisfy: the
monotonicity constants (beta1, beta2, mu1) of the stacked coefficient map
A = (-G^T f, G b, G sigma), the Lipschitz constant K, the linear-growth
constant L, and the Lipschitz constant of sigma in z.  The backward
dimension is fixed to 1 (f and phi are real-valued); G is a full-rank
1 x n row.

The claimed constants cannot be verified symbolically for arbitrary
coefficients, so the validators here check them by seeded sampling over a
compact box and report the worst violation plus empirically fitted
constants.  ``contraction_step_bound`` determines, also empirically, the
largest time step at which the one-step Picard solver of :mod:`.fbsde`
contracts, by halving a trial step until the observed ratio passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputError, NonContractionError

CoefficientFn = Callable[..., object]


def _as_matrix(value, n: int, d: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (n, d):
        return arr
    if arr.size == n * d:
        return arr.reshape(n, d)
    raise InputError(f"diffusion evaluator returned shape {arr.shape}, expected ({n}, {d})")


def _as_vector(value, n: int, label: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (n,):
        return arr
    if arr.size == n:
        return arr.reshape(n)
    raise InputError(f"{label} evaluator returned shape {arr.shape}, expected ({n},)")


@dataclass(frozen=True)
class ControlProblem:
    """One stochastic control problem instance; immutable and safe to
    share read-only across parallel workers.

    Coefficient evaluators take ``(t, x, y, z, u)``.  For the 1-D solver
    fast path (n = d = 1) they must broadcast over numpy arrays passed in
    the x/y/z slots; the validators also call them pointwise with
    ``x: (n,)`` and ``z: (d,)`` arrays for general dimensions.
    """

    n: int
    d: int
    b: CoefficientFn
    sigma: CoefficientFn
    f: CoefficientFn
    phi: Callable[[object], object]
    G: np.ndarray
    beta1: float
    beta2: float
    mu1: float
    K: float
    L: float
    L_sigma: float
    control_set: tuple
    T: float
    sigma_depends_on_z: bool = False
    sigma_depends_on_u: bool = False
    name: str = ""
    check_constants: bool = True

    m: int = field(default=1, init=False)  # backward dimension is fixed

    def __post_init__(self):
        object.__setattr__(self, "G", np.atleast_2d(np.asarray(self.G, dtype=float)))
        object.__setattr__(self, "control_set", tuple(self.control_set))
        if self.n < 1 or self.d < 1:
            raise InputError("state and noise dimensions must be positive")
        if self.T <= 0:
            raise InputError("horizon must be positive")
        if self.G.shape != (1, self.n):
            raise InputError(f"G must be a 1 x {self.n} row, got shape {self.G.shape}")
        if np.linalg.matrix_rank(self.G) != 1:
            raise InputError("G must have full rank 1")
        if not self.control_set:
            raise InputError("control set must be nonempty")
        if min(self.K, self.L, self.L_sigma) < 0:
            raise InputError("K, L and L_sigma must be nonnegative")
        if min(self.beta1, self.beta2, self.mu1) < 0:
            raise InputError("monotonicity constants must be nonnegative")
        if self.sigma_depends_on_z and self.sigma_depends_on_u:
            raise InputError("sigma may depend on z or on u, not both")
        if self.check_constants and not self.constants_ok:
            raise InputError(
                "monotonicity constants violate the structural constraints "
                "(need beta1+beta2 > 0, beta2+mu1 > 0, beta2 > 0 when n > 1 "
                "or when sigma depends on z); pass check_constants=False for "
                "deliberately degenerate instances")

    @property
    def constants_ok(self) -> bool:
        """Structural constraints on the claimed monotonicity constants."""
        if self.beta1 + self.beta2 <= 0 or self.beta2 + self.mu1 <= 0:
            return False
        if self.n > 1 and self.beta2 <= 0:  # m = 1 < n
            return False
        if self.sigma_depends_on_z and self.beta2 <= 0:
            return False
        return True

    def eval_coefficients(self, t, x, y, z, u):
        """Evaluate (b, sigma, f) pointwise with shape checks."""
        x = _as_vector(x, self.n, "state")
        z = _as_vector(z, self.d, "z")
        bv = _as_vector(self.b(t, x if self.n > 1 else float(x[0]), y,
                                z if self.d > 1 else float(z[0]), u), self.n, "drift")
        sv = _as_matrix(self.sigma(t, x if self.n > 1 else float(x[0]), y,
                                   z if self.d > 1 else float(z[0]), u), self.n, self.d)
        fv = float(np.asarray(self.f(t, x if self.n > 1 else float(x[0]), y,
                                     z if self.d > 1 else float(z[0]), u)))
        if not (np.all(np.isfinite(bv)) and np.all(np.isfinite(sv)) and np.isfinite(fv)):
            raise InputError("non-finite coefficient value")
        return bv, sv, fv


def assemble_A(problem: ControlProblem, t: float, lam, u) -> np.ndarray:
    """Stacked coefficient map (-G^T f, G b, G sigma) at (t, lam, u).

    ``lam`` is the tuple (x, y, z) with x in R^n, y scalar, z in R^d.
    Returns a vector of length n + 1 + d.
    """
    if len(lam) != 3:
        raise InputError("lam must be the tuple (x, y, z)")
    x, y, z = lam
    bv, sv, fv = problem.eval_coefficients(t, x, float(y), z, u)
    G = problem.G
    return np.concatenate([
        -(G.T * fv).ravel(),
        (G @ bv).ravel(),
        (G @ sv).ravel(),
    ])


def monotonicity_excess(problem: ControlProblem, t, lam, lam_bar, u,
                        beta1: float | None = None,
                        beta2: float | None = None) -> float:
    """Positive part of the monotonicity form at one sample pair.

    Evaluates <A(t,lam) - A(t,lam_bar), lam - lam_bar>
              + beta1 |G dx|^2 + beta2 (|G^T dy|^2 + |G^T dz|^2);
    nonpositive values mean the claimed constants hold at this pair.
    """
    b1 = problem.beta1 if beta1 is None else beta1
    b2 = problem.beta2 if beta2 is None else beta2
    x1, y1, z1 = lam
    x2, y2, z2 = lam_bar
    dA = assemble_A(problem, t, lam, u) - assemble_A(problem, t, lam_bar, u)
    dx = np.asarray(x1, dtype=float).reshape(problem.n) - np.asarray(x2, dtype=float).reshape(problem.n)
    dy = float(y1) - float(y2)
    dz = np.asarray(z1, dtype=float).reshape(problem.d) - np.asarray(z2, dtype=float).reshape(problem.d)
    dlam = np.concatenate([dx, [dy], dz])
    G = problem.G
    g2 = float((G @ G.T).item())  # |G^T s|^2 = g2 * s^2 for scalar backward components
    form = float(dA @ dlam)
    gdx = float((G @ dx).item())
    return form + b1 * gdx ** 2 + b2 * (g2 * dy ** 2 + g2 * float(dz @ dz))


def terminal_excess(problem: ControlProblem, x, x_bar,
                    mu1: float | None = None) -> float:
    """Positive part of the terminal monotonicity form
    mu1 |G dx|^2 - <phi(x) - phi(x_bar), G(x - x_bar)> at one pair."""
    m1 = problem.mu1 if mu1 is None else mu1
    xa = np.asarray(x, dtype=float).reshape(problem.n)
    xb = np.asarray(x_bar, dtype=float).reshape(problem.n)
    dphi = float(np.asarray(problem.phi(xa if problem.n > 1 else float(xa[0]))) -
                 np.asarray(problem.phi(xb if problem.n > 1 else float(xb[0]))))
    gdx = float((problem.G @ (xa - xb)).item())
    return m1 * gdx ** 2 - dphi * gdx


@dataclass(frozen=True)
class BoxSampler:
    """Seeded uniform sampler over a compact coordinate box.

    All validators are deterministic given the seed.
    """

    seed: int = 0
    low: float = -5.0
    high: float = 5.0

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def points(self, rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=(count, dim))


@dataclass
class ValidationReport:
    """Outcome of one sampled assumption check.

    ``witness`` stores the sample achieving the worst violation with
    enough data to re-evaluate it; re-evaluation must reproduce
    ``worst_violation``.
    """

    assumption: str
    samples: int
    worst_violation: float
    witness: dict
    fitted: dict
    passed: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v
        return {
            "assumption": self.assumption,
            "samples": self.samples,
            "worst_violation": clean(self.worst_violation),
            "witness": {k: clean(v) for k, v in self.witness.items()},
            "fitted": {k: clean(v) for k, v in self.fitted.items()},
            "passed": bool(self.passed),
            "notes": list(self.notes),
        }


def _sample_tuple(problem, sampler, rng, count):
    ts = rng.uniform(0.0, problem.T, size=count)
    us = [problem.control_set[i] for i in rng.integers(0, len(problem.control_set), size=count)]
    dim = problem.n + 1 + problem.d
    p1 = sampler.points(rng, count, dim)
    p2 = sampler.points(rng, count, dim)
    return ts, us, p1, p2


def _split(problem, p):
    n, d = problem.n, problem.d
    return p[:n], float(p[n]), p[n + 1:n + 1 + d]


def validate_monotonicity(problem: ControlProblem, sampler: BoxSampler,
                          count: int, tol: float = 1e-9) -> ValidationReport:
    """Sampled check of the monotonicity assumptions at the declared
    (beta1, beta2, mu1).

    Draws ``count`` joint pairs plus axis-restricted families (x-only,
    y-only, z-only, terminal) at sampled (t, u); reports the max positive
    excess of the bilinear form and of the terminal form, and the
    empirically tightest constants fitted on the axis families.  A
    violation is a report outcome, not an error.
    """
    if count < 1:
        raise InputError("count must be >= 1")
    rng = sampler.make_rng()
    n, d = problem.n, problem.d
    g2 = float((problem.G @ problem.G.T).item())

    worst = -np.inf
    witness: dict = {}
    total = 0

    def consider(value, family, t, u, lam1, lam2):
        nonlocal worst, witness
        if value > worst:
            worst = value
            witness = {
                "family": family, "t": float(t), "u": u,
                "lam": [np.asarray(lam1[0]).tolist(), lam1[1], np.asarray(lam1[2]).tolist()],
                "lam_bar": [np.asarray(lam2[0]).tolist(), lam2[1], np.asarray(lam2[2]).tolist()],
            }

    # joint pairs: violation against the declared constants
    ts, us, p1, p2 = _sample_tuple(problem, sampler, rng, count)
    for t, u, a, bb in zip(ts, us, p1, p2):
        lam1, lam2 = _split(problem, a), _split(problem, bb)
        consider(monotonicity_excess(problem, t, lam1, lam2, u), "joint", t, u, lam1, lam2)
        total += 1

    # axis families: fitted constants
    beta1_fit = np.inf
    beta2_fit = np.inf
    mu1_fit = np.inf
    ts, us, p1, p2 = _sample_tuple(problem, sampler, rng, count)
    for t, u, a, bb in zip(ts, us, p1, p2):
        base = _split(problem, a)
        x2 = _split(problem, bb)[0]
        lam2 = (x2, base[1], base[2])
        gdx2 = float(((problem.G @ (base[0] - x2)) ** 2).item())
        if gdx2 > 1e-12:
            form = monotonicity_excess(problem, t, base, lam2, u, beta1=0.0, beta2=0.0)
            beta1_fit = min(beta1_fit, -form / gdx2)
            consider(monotonicity_excess(problem, t, base, lam2, u), "x-only", t, u, base, lam2)
        ex = terminal_excess(problem, base[0], x2)
        consider(ex, "terminal", t, u, (base[0], 0.0, np.zeros(d)), (x2, 0.0, np.zeros(d)))
        if gdx2 > 1e-12:
            mu1_fit = min(mu1_fit, -terminal_excess(problem, base[0], x2, mu1=0.0) / gdx2)
        total += 2

    ts, us, p1, p2 = _sample_tuple(problem, sampler, rng, count)
    for t, u, a, bb in zip(ts, us, p1, p2):
        base = _split(problem, a)
        alt = _split(problem, bb)
        for family, lam2 in (("y-only", (base[0], alt[1], base[2])),
                             ("z-only", (base[0], base[1], alt[2]))):
            dy = base[1] - lam2[1]
            dz = base[2] - lam2[2]
            denom = g2 * dy ** 2 + g2 * float(dz @ dz)
            if denom > 1e-12:
                form = monotonicity_excess(problem, t, base, lam2, u, beta1=0.0, beta2=0.0)
                beta2_fit = min(beta2_fit, -form / denom)
            consider(monotonicity_excess(problem, t, base, lam2, u), family, t, u, base, lam2)
            total += 1

    notes = []
    constants_ok = problem.constants_ok
    if not constants_ok:
        notes.append("constants constraint failed: need beta1+beta2 > 0 and beta2+mu1 > 0 "
                     "(beta2 > 0 when n > 1 or sigma depends on z)")
    worst_violation = max(worst, 0.0)
    return ValidationReport(
        assumption="monotonicity",
        samples=total,
        worst_violation=float(worst_violation),
        witness=witness,
        fitted={"beta1": float(beta1_fit), "beta2": float(beta2_fit), "mu1": float(mu1_fit),
                "declared_beta1": problem.beta1, "declared_beta2": problem.beta2,
                "declared_mu1": problem.mu1},
        passed=bool(worst_violation <= tol and constants_ok),
        notes=notes,
    )


def validate_lipschitz(problem: ControlProblem, sampler: BoxSampler,
                       count: int, tol: float = 1e-9) -> ValidationReport:
    """Sampled check of the uniform Lipschitz assumption.

    Reports, per coefficient l in {b, sigma, f, phi}, the largest sampled
    ratio |dl| / (|dx| + |dy| + |dz|) against the declared K, and
    separately the sigma-in-z ratio against the declared L_sigma.
    Axis-aligned pairs are included so linear coefficients are fitted
    exactly.
    """
    if count < 1:
        raise InputError("count must be >= 1")
    rng = sampler.make_rng()
    n, d = problem.n, problem.d
    ratios = {"b": 0.0, "sigma": 0.0, "f": 0.0, "phi": 0.0}
    sigma_z_ratio = 0.0
    witness: dict = {}
    worst_excess = -np.inf
    total = 0

    def pairs():
        ts, us, p1, p2 = _sample_tuple(problem, sampler, rng, count)
        for t, u, a, bb in zip(ts, us, p1, p2):
            yield t, u, a, bb                       # joint move
            for j in range(n + 1 + d):              # axis-aligned moves
                axis = a.copy()
                axis[j] = bb[j]
                yield t, u, a, axis

    for t, u, a, bb in pairs():
        x1, y1, z1 = _split(problem, a)
        x2, y2, z2 = _split(problem, bb)
        denom = float(np.linalg.norm(x1 - x2) + abs(y1 - y2) + np.linalg.norm(z1 - z2))
        b1, s1, f1 = problem.eval_coefficients(t, x1, y1, z1, u)
        b2, s2, f2 = problem.eval_coefficients(t, x2, y2, z2, u)
        total += 1
        if denom > 1e-12:
            deltas = {"b": float(np.linalg.norm(b1 - b2)),
                      "sigma": float(np.linalg.norm(s1 - s2)),
                      "f": abs(f1 - f2)}
            if np.linalg.norm(x1 - x2) > 1e-12:
                phi1 = float(np.asarray(problem.phi(x1 if n > 1 else float(x1[0]))))
                phi2 = float(np.asarray(problem.phi(x2 if n > 1 else float(x2[0]))))
                r = abs(phi1 - phi2) / float(np.linalg.norm(x1 - x2))
                ratios["phi"] = max(ratios["phi"], r)
            for key, dl in deltas.items():
                r = dl / denom
                if r > ratios[key]:
                    ratios[key] = r
                excess = r - problem.K
                if excess > worst_excess:
                    worst_excess = excess
                    witness = {"coefficient": key, "t": float(t), "u": u,
                               "pair": [a.tolist(), bb.tolist()], "ratio": float(r)}
        dz_only = (np.linalg.norm(x1 - x2) < 1e-14 and abs(y1 - y2) < 1e-14
                   and np.linalg.norm(z1 - z2) > 1e-12)
        if dz_only:
            r = float(np.linalg.norm(s1 - s2)) / float(np.linalg.norm(z1 - z2))
            sigma_z_ratio = max(sigma_z_ratio, r)

    fitted_k = max(ratios.values())
    violation = max(0.0, fitted_k - problem.K, sigma_z_ratio - problem.L_sigma)
    return ValidationReport(
        assumption="lipschitz",
        samples=total,
        worst_violation=float(violation),
        witness=witness,
        fitted={**{f"K_{k}": float(v) for k, v in ratios.items()},
                "K": float(fitted_k), "sigma_z": float(sigma_z_ratio),
                "declared_K": problem.K, "declared_L_sigma": problem.L_sigma},
        passed=bool(violation <= tol),
        notes=[],
    )


def contraction_step_bound(problem: ControlProblem,
                           probe_terminal: Callable,
                           x_probe: float,
                           delta_init: float,
                           *,
                           lattice=None,
                           tolerance: float = 1e-10,
                           max_iterations: int = 30,
                           ratio_bound: float = 0.5,
                           max_halvings: int = 20,
                           t: float = 0.0) -> float:
    """Largest admissible step delta0 = delta_init * 2^-k for the one-step
    Picard solver, probed empirically.

    A step is admissible when, for every control in the control set, the
    one-step solve at (t, x_probe) with ``probe_terminal`` converges
    within ``max_iterations`` sweeps and its observed contraction ratio
    over the last three iterates is at most ``ratio_bound``.  Raises
    :class:`NonContractionError` when no step within ``max_halvings``
    halvings passes (the problem's diffusion is too strongly coupled in z
    for this scheme).
    """
    from .fbsde import NoiseLattice, one_step_solve

    if delta_init <= 0:
        raise InputError("delta_init must be positive")
    if lattice is None:
        lattice = NoiseLattice.trinomial(problem.d)

    for k in range(max_halvings + 1):
        delta = delta_init * 2.0 ** (-k)
        admissible = True
        for u in problem.control_set:
            try:
                sol = one_step_solve(problem, t, x_probe, delta, u, probe_terminal,
                                     lattice, tolerance, max_iter=4 * max_iterations)
            except (NonContractionError, InputError):
                admissible = False
                break
            if sol.iterations > max_iterations or sol.contraction_ratio > ratio_bound:
                admissible = False
                break
        if admissible:
            return delta
    raise NonContractionError(
        f"no admissible step found within {max_halvings} halvings of {delta_init}; "
        "the diffusion's Lipschitz constant in z is too large for the "
        "contraction scheme")

"""Scalar-coefficient algebraic equation solver.

Solves z = zeta + a * sigma1(z) for a >= 0, the pointwise coupling that
ties the gradient variable of the algebraic-coupled HJB system to the
diffusion.  Large a * Lip(sigma1 in z) defeats plain fixed-point
iteration, so the solve climbs a continuation ladder a_k = (k/N) a whose
increment keeps every inner contraction factor below 1/2:

    N = 1 + floor(a * lip_z / target),   target = 1/2 by default.

Each rung solves z = zeta + a_k sigma1(z) by a two-loop iteration, warm
started from the previous rung: the outer loop freezes the newest
increment term (zeta + da * sigma1(z_n)) and the inner loop solves the
remaining lower-rung problem; at the bottom rung the map itself
contracts and plain iteration applies.  For one-sidedly monotone sigma1
the outer loop contracts for any a; for merely Lipschitz sigma1 the
ladder still contracts whenever a * lip_z < 1/2 in a single rung, and
divergence surfaces as a budget-exhausted error.

Termination is residual-based, so every returned solution certifies
|z - zeta - a sigma1(z)| <= tolerance independently of the loop.
All functions are pure; calls are safe to issue in parallel (one per
grid node in the algebraic-coupled HJB solver).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NonConvergenceError


@dataclass(frozen=True)
class AlgebraicConfig:
    """Tolerances and budget for the pointwise algebraic solve."""

    tolerance: float = 1e-12
    max_iterations: int = 200
    target_contraction: float = 0.5

    def __post_init__(self):
        if self.tolerance <= 0:
            raise InputError("tolerance must be positive")
        if self.max_iterations < 1:
            raise InputError("max iterations must be >= 1")
        if not 0 < self.target_contraction < 1:
            raise InputError("target contraction must lie in (0, 1)")


@dataclass
class AlgebraicSolution:
    """Solution record; ``residual`` is re-evaluated outside the loop."""

    z: object
    residual: float
    continuation_steps: int
    inner_iterations: int


class _Budget:
    __slots__ = ("left",)

    def __init__(self, total: int):
        self.left = int(total)

    def spend(self, n: int = 1) -> None:
        self.left -= n
        if self.left < 0:
            raise NonConvergenceError(
                "algebraic solver iteration budget exhausted without meeting "
                "tolerance (monotonicity violation in z, or lip_z understated)")


def _direct(coef, zeta, sigma1, z, tol, budget):
    """Plain fixed-point iteration of z -> zeta + coef * sigma1(z);
    requires the map to contract.  Returns a residual-certified iterate
    (|cand - z| is exactly the residual of the current z)."""
    updates = 0
    while True:
        budget.spend()
        cand = zeta + coef * sigma1(z)
        res = float(np.max(np.abs(cand - z)))
        if not np.isfinite(res):
            raise NonConvergenceError("algebraic iteration produced non-finite values")
        if res <= tol:
            return z, updates
        z = cand
        updates += 1


def _rung(level, da, zeta, sigma1, lip_z, z, tol, target, budget):
    """Solve z = zeta + (level * da) * sigma1(z), recursing one rung down.

    The outer loop freezes the newest increment at the current iterate and
    hands the remaining bulk to the rung below; one sigma1 evaluation per
    pass serves both the frozen term and the residual check, and the inner
    problem is solved only as accurately as the current outer residual
    warrants (tightening to tol/2 as the outer loop converges).
    """
    coef = level * da
    if level <= 1 or np.max(coef * lip_z) <= target:
        return _direct(coef, zeta, sigma1, z, tol, budget)
    updates = 0
    while True:
        budget.spend()
        s_z = sigma1(z)
        res = float(np.max(np.abs(z - zeta - coef * s_z)))
        if not np.isfinite(res):
            raise NonConvergenceError("algebraic iteration produced non-finite values")
        if res <= tol:
            return z, updates
        inner_tol = max(0.5 * tol, 0.25 * res)
        z, inner_updates = _rung(level - 1, da, zeta + da * s_z, sigma1, lip_z,
                                 z, inner_tol, target, budget)
        updates += 1 + inner_updates


def _solve_core(a, sigma1, zeta, lip_z, config):
    """Shared scalar/batch core.  ``a`` and ``zeta`` are arrays of equal
    shape; ``sigma1`` maps such arrays elementwise."""
    a = np.asarray(a, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if np.any(a < 0):
        raise InputError("the gradient weight a must be nonnegative "
                         "(sign condition on the aligned gradient component)")
    if lip_z < 0:
        raise InputError("lip_z must be nonnegative")
    budget = _Budget(config.max_iterations)
    a_max = float(np.max(a)) if a.size else 0.0
    if a_max == 0.0:
        return zeta.copy(), 0.0, 0, 0
    levels = 1 + int(np.floor(a_max * lip_z / config.target_contraction))
    da = a / levels
    z = zeta.copy()
    updates = 0
    for k in range(1, levels + 1):
        z, rung_updates = _rung(k, da, zeta, sigma1, lip_z, z,
                                config.tolerance * 0.5,
                                config.target_contraction, budget)
        updates += rung_updates
    residual = float(np.max(np.abs(z - zeta - a * sigma1(z))))
    if residual > config.tolerance:
        raise NonConvergenceError(
            f"algebraic residual {residual:.3e} above tolerance "
            f"{config.tolerance:g} after {updates} updates")
    return z, residual, levels, updates


def solve_pointwise(a: float, sigma1, zeta, lip_z: float,
                    config: AlgebraicConfig | None = None) -> AlgebraicSolution:
    """Unique z with z = zeta + a * sigma1(z).

    ``sigma1`` maps z in R^d to R^d; ``lip_z`` bounds its Lipschitz
    constant in z.  With a = 0 the answer is zeta itself.  Raises
    InputError for a < 0 and NonConvergenceError when the iteration
    budget runs out.
    """
    if config is None:
        config = AlgebraicConfig()
    a = float(a)
    if a < 0:
        raise InputError("a must be nonnegative (sign condition)")
    zeta_arr = np.atleast_1d(np.asarray(zeta, dtype=float))
    scalar = np.ndim(zeta) == 0

    if scalar:
        def sig1(zv):
            return np.atleast_1d(np.asarray(sigma1(float(zv[0])), dtype=float))

        z, residual, levels, spent = _solve_core(np.full(1, a), sig1,
                                                 zeta_arr, lip_z, config)
        # Euclidean residual of the d = 1 point coincides with the max-abs one.
        return AlgebraicSolution(z=float(z[0]), residual=residual,
                                 continuation_steps=levels, inner_iterations=spent)
    z, _, levels, spent = _solve_core(np.full(zeta_arr.shape, a), sigma1,
                                      zeta_arr, lip_z, config)
    residual = float(np.linalg.norm(z - zeta_arr - a * np.asarray(sigma1(z), dtype=float)))
    if residual > config.tolerance * np.sqrt(zeta_arr.size):
        raise NonConvergenceError(
            f"algebraic residual {residual:.3e} above tolerance")
    return AlgebraicSolution(z=z, residual=residual,
                             continuation_steps=levels, inner_iterations=spent)


def solve_batch(a, sigma1, zeta, lip_z: float,
                config: AlgebraicConfig | None = None) -> AlgebraicSolution:
    """Vectorized variant: solves z_i = zeta_i + a_i * sigma1(z)_i for a
    batch of independent instances (``sigma1`` acts elementwise on the
    batch array).  Used once per grid node and slice by the
    algebraic-coupled HJB solver."""
    if config is None:
        config = AlgebraicConfig()
    a = np.asarray(a, dtype=float)
    zeta = np.broadcast_to(np.asarray(zeta, dtype=float), a.shape).copy()
    z, residual, levels, spent = _solve_core(a, sigma1, zeta, lip_z, config)
    return AlgebraicSolution(z=z, residual=residual,
                             continuation_steps=levels, inner_iterations=spent)


def h_representation(s: float, x_bar, y: float, zeta, dphi, phi, sigma,
                     config: AlgebraicConfig | None = None, *,
                     lip_z: float) -> object:
    """Representation function of the algebraic solution: the unique z
    solving z = zeta + dphi(s, x_bar) . sigma(s, x_bar, y + phi(s, x_bar), z).

    ``dphi`` must return the aligned gradient component, which must be
    nonnegative at (s, x_bar); ``sigma`` is the problem diffusion row as
    a (t, x, y, z) callable.  Delegates to :func:`solve_pointwise`.
    """
    a = float(np.asarray(dphi(s, x_bar), dtype=float))
    offset = float(np.asarray(phi(s, x_bar), dtype=float))
    y_total = y + offset

    def sigma1(z):
        return sigma(s, x_bar, y_total, z)

    return solve_pointwise(a, sigma1, zeta, lip_z, config).z

import numpy as np
import pytest

from fbcontrol import fbsde, verify
from fbcontrol.errors import InputError, NonContractionError, StepTooLargeError
from fbcontrol.fbsde import (NoiseLattice, lattice_tree_moments, one_step_solve,
                             semigroup_apply, solve_fixed_control)
from fbcontrol.grids import GridPair, LinearField
from fbcontrol.presets import example_5_1, example_5_2

from conftest import make_problem, unit_diffusion_problem, zero_problem


class TestNoiseLattice:
    @pytest.mark.parametrize("d", [1, 2])
    def test_moments_match_to_1e14(self, d):
        lat = NoiseLattice.trinomial(d)
        p = lat.probabilities
        out = lat.outcomes
        assert abs(p.sum() - 1.0) <= 1e-14
        assert np.max(np.abs(p @ out)) <= 1e-14
        cov = (out * p[:, None]).T @ out
        assert np.max(np.abs(cov - np.eye(d))) <= 1e-14
        assert np.all(p >= 0)

    def test_third_moment_vanishes(self):
        lat = NoiseLattice.trinomial(1)
        assert abs(lat.probabilities @ lat.xi1 ** 3) <= 1e-14

    def test_invalid_probabilities_rejected(self):
        with pytest.raises(InputError):
            NoiseLattice(np.array([-1.0, 1.0]), np.array([0.6, 0.6]))
        with pytest.raises(InputError):
            NoiseLattice(np.array([-1.0, 1.0]), np.array([-0.5, 1.5]))
        with pytest.raises(InputError):  # wrong covariance
            NoiseLattice(np.array([-2.0, 2.0]), np.array([0.5, 0.5]))


class TestOneStepSolve:
    def test_zero_coefficients_single_iteration(self):
        p = zero_problem()
        sol = one_step_solve(p, 0.0, 0.7, 0.05, 0.0, p.phi)
        assert sol.y == pytest.approx(np.sin(0.7) + 0.7, abs=1e-14)
        assert sol.z == pytest.approx(0.0, abs=1e-12)
        assert sol.iterations == 1
        assert sol.contraction_ratio == 0.0

    @pytest.mark.parametrize("delta", [0.5, 0.1, 1e-3])
    def test_unit_diffusion_identity_terminal_exact(self, delta):
        # lattice moment identities make Y = x and Z = 1 exact at any step
        p = unit_diffusion_problem()
        sol = one_step_solve(p, 0.0, -1.3, delta, 0.0, p.phi)
        assert sol.y == pytest.approx(-1.3, abs=1e-12)
        assert sol.z == pytest.approx(1.0, abs=1e-12)

    def test_constant_driver_closed_form(self):
        # hand-solved decoupled step: Y = x + c delta, Z = 1
        c, delta, x = 0.7, 0.25, 2.0
        p = unit_diffusion_problem(f_value=c)
        sol = one_step_solve(p, 0.0, x, delta, 0.0, p.phi)
        assert sol.y == pytest.approx(x + c * delta, abs=1e-12)
        assert sol.z == pytest.approx(1.0, abs=1e-12)
        assert sol.final_update <= 1e-10

    def test_successors_match_scheme(self):
        p = unit_diffusion_problem()
        delta = 0.04
        sol = one_step_solve(p, 0.0, 1.0, delta, 0.0, p.phi)
        lat = NoiseLattice.trinomial(1)
        np.testing.assert_allclose(sol.successors,
                                   1.0 + np.sqrt(delta) * lat.xi1, atol=1e-14)

    def test_non_contraction_raises(self):
        p = example_5_2(l_sigma=10.0, check_constants=False)
        with pytest.raises(NonContractionError):
            one_step_solve(p, 0.0, 1.0, 0.05, 0.0, p.phi, max_iter=60)

    def test_non_finite_coefficient_is_input_error(self):
        p = make_problem(b=lambda t, x, y, z, u: np.full_like(np.asarray(x, dtype=float), np.nan),
                         sigma=lambda t, x, y, z, u: 0.0 * x,
                         f=lambda t, x, y, z, u: 0.0 * x,
                         phi=lambda x: x)
        with pytest.raises(InputError):
            one_step_solve(p, 0.0, 0.0, 0.01, 0.0, p.phi)


class TestSemigroupApply:
    def test_single_substep_is_one_step_solve(self, preset_5_1):
        y1 = semigroup_apply(preset_5_1, 0.0, 0.5, 1e-3, 0.2, preset_5_1.phi, 1)
        sol = one_step_solve(preset_5_1, 0.0, 0.5, 1e-3, 0.2, preset_5_1.phi)
        assert y1 == sol.y

    @pytest.mark.parametrize("substeps", [1, 2, 3])
    def test_zero_coefficients_reproduce_terminal(self, substeps):
        p = zero_problem()
        y = semigroup_apply(p, 0.0, 0.4, 0.05, 0.0, p.phi, substeps)
        assert y == pytest.approx(np.sin(0.4) + 0.4, abs=1e-10)

    def test_preset_one_substep_refinement_consistency(self, preset_5_1):
        y1 = semigroup_apply(preset_5_1, 0.0, 0.0, 1e-3, 0.0, lambda x: x, 1)
        y2 = semigroup_apply(preset_5_1, 0.0, 0.0, 1e-3, 0.0, lambda x: x, 2)
        assert abs(y1 - y2) <= 5e-3


class TestSolveFixedControl:
    def test_zero_coefficients_replicate_terminal(self):
        p = zero_problem(T=0.5)
        g = GridPair.build(0.5, 0.05, (-2, 2), 0.1)
        fields = solve_fixed_control(p, lambda t, x: 0.0, g, p.phi)
        target = np.sin(g.nodes) + g.nodes
        for f in fields:
            np.testing.assert_allclose(f.values, target, atol=1e-12)

    def test_linear_closed_form(self):
        # sigma = 1, b = 0, f = 1, phi = x: J(t, x) = x + (T - t)
        p = unit_diffusion_problem(f_value=1.0, T=0.2)
        g = GridPair.build(0.2, 0.01, (-1.5, 1.5), 0.05)
        fields = solve_fixed_control(p, lambda t, x: 0.0, g, p.phi)
        for f in fields:
            np.testing.assert_allclose(f.values, g.nodes + (0.2 - f.time), atol=1e-9)
        assert fields.report.max_sweeps <= 3

    def test_markov_flow_consistency_on_preset_two(self, preset_5_2):
        # re-running from an intermediate slice reproduces earlier slices
        g = GridPair.build(0.25, 0.005, (-2, 2), 0.05)
        fields = solve_fixed_control(preset_5_2, lambda t, x: 0.0, g, preset_5_2.phi)
        k = len(fields) // 2
        sub = GridPair(times=g.times[:k + 1], nodes=g.nodes)
        restart = LinearField(g.nodes, fields[k].values)
        fields2 = solve_fixed_control(preset_5_2, lambda t, x: 0.0, sub, restart,
                                      enforce_step=False)
        budget = verify.interpolation_budget(fields) + 1e-8
        for i in range(k):
            assert np.max(np.abs(fields2[i].values - fields[i].values)) <= budget

    def test_step_above_bound_raises(self, preset_5_1):
        g = GridPair.build(0.25, 0.016, (-2, 2), 0.1)
        with pytest.raises(StepTooLargeError) as err:
            solve_fixed_control(preset_5_1, lambda t, x: 0.0, g, preset_5_1.phi)
        assert err.value.delta0 < 0.016


class TestTreeMoments:
    def test_second_moment_bounds_stable_under_refinement(self, preset_5_2):
        x0, total = 1.5, 0.02
        fits = []
        for substeps in (2, 4):
            m = lattice_tree_moments(preset_5_2, 0.0, x0, total, substeps, 0.0,
                                     preset_5_2.phi)
            fits.append({
                "dx2": m["E_sup_dx2"] / (total * (1 + x0 ** 2)),
                "x2": m["E_sup_x2"] / (1 + x0 ** 2),
                "y2": m["E_sup_y2"] / (1 + x0 ** 2),
                "z2": m["E_int_z2"] / (1 + x0 ** 2),
            })
        for key in fits[0]:
            lo, hi = sorted((fits[0][key], fits[1][key]))
            assert hi <= 2.0 * lo + 1e-9, key

    def test_displacement_moment_scales_with_interval(self, preset_5_2):
        x0 = 1.0
        cs = []
        for total in (0.04, 0.02, 0.01):
            m = lattice_tree_moments(preset_5_2, 0.0, x0, total, 2, 0.0,
                                     preset_5_2.phi)
            cs.append(m["E_sup_dx2"] / (total * (1 + x0 ** 2)))
        lo, hi = min(cs), max(cs)
        assert hi <= 2.0 * lo

    def test_root_value_matches_semigroup(self, preset_5_2):
        m = lattice_tree_moments(preset_5_2, 0.0, 0.5, 0.02, 2, 0.0, preset_5_2.phi)
        y = semigroup_apply(preset_5_2, 0.0, 0.5, 0.02, 0.0, preset_5_2.phi, 2)
        assert m["y0"] == pytest.approx(y, abs=1e-9)


class TestTerminalPerturbation:
    @pytest.mark.parametrize("eps", [1e-3, 1e-2, 0.5])
    def test_shifted_terminal_moves_value_by_at_most_c_eps(self, preset_5_2, eps):
        delta = 0.005
        base = one_step_solve(preset_5_2, 0.0, 0.8, delta, 0.0, preset_5_2.phi)
        shifted = one_step_solve(preset_5_2, 0.0, 0.8, delta, 0.0,
                                 lambda x: preset_5_2.phi(x) + eps)
        assert abs(shifted.y - base.y) <= 1.5 * eps

    def test_constant_c_stable_under_step_halving(self, preset_5_2):
        eps = 0.1
        cs = []
        for delta in (0.004, 0.002):
            base = one_step_solve(preset_5_2, 0.0, 0.8, delta, 0.0, preset_5_2.phi)
            shifted = one_step_solve(preset_5_2, 0.0, 0.8, delta, 0.0,
                                     lambda x: preset_5_2.phi(x) + eps)
            cs.append(abs(shifted.y - base.y) / eps)
        assert abs(cs[1] - cs[0]) <= 0.2 * cs[0] + 1e-9

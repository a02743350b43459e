import numpy as np
import pytest

from fbcontrol.algebraic import AlgebraicConfig
from fbcontrol.errors import BlowUpError, ConfigError, InputError
from fbcontrol.grids import GridPair
from fbcontrol.hjb import (FdScheme, algebraic_residuals, hamiltonian_case1,
                           solve_case1, solve_case2, terminal_cfl_dt)
from fbcontrol.presets import example_5_2

from conftest import make_problem, transport_problem, unit_diffusion_problem


class TestHamiltonianCase1:
    def test_pure_diffusion_with_flat_curvature_vanishes(self):
        p = make_problem(b=lambda t, x, y, z, u: 0.0 * x,
                         sigma=lambda t, x, y, z, u: 3.0 + 0.0 * x,
                         f=lambda t, x, y, z, u: 0.0 * x,
                         phi=lambda x: x)
        assert hamiltonian_case1(p, 0.0, 1.0, 7.0, 1.0, 0.0, 0.0) == 0.0

    def test_flat_test_function_reduces_to_driver(self, preset_5_1):
        for x, w, u in [(-1.0, 0.5, 0.2), (2.0, -1.0, -1.0)]:
            h = hamiltonian_case1(preset_5_1, 0.0, x, w, 0.0, 0.0, u)
            assert h == pytest.approx(2 * x + 3 * w + u, abs=1e-12)

    def test_matches_preset_one_stated_equation(self, preset_5_1):
        # the z slot takes p*sigma: expanding gives exactly the preset PDE
        rng = np.random.default_rng(0)
        for _ in range(100):
            t, x, w, p, M, u = rng.uniform(-2, 2, 6)
            h = hamiltonian_case1(preset_5_1, t, x, w, p, M, u)
            s = 4 * x - 5 * w + u
            ref = 0.5 * M * s * s + p * (3 * x + 5 * p * s) + 2 * x + 3 * w + 4 * p * s + u
            assert h == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_z_dependent_diffusion_rejected(self, preset_5_2):
        with pytest.raises(InputError):
            hamiltonian_case1(preset_5_2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


class TestSolveCase1:
    def test_affine_terminal_data_preserved_exactly(self):
        p = unit_diffusion_problem(T=0.2)
        g = GridPair.build(0.2, 0.01, (-2, 2), 0.05)
        scheme = FdScheme(dx=g.dx, dt=0.9 * g.dx ** 2)
        fields = solve_case1(p, g, scheme)
        for f in fields:
            np.testing.assert_allclose(f.values, g.nodes, atol=1e-12)

    def test_degenerate_diffusion_transport(self):
        p = transport_problem(T=0.2)
        g = GridPair.build(0.2, 0.002, (-2, 2), 0.05)
        fields = solve_case1(p, g, FdScheme(dx=g.dx, dt=0.002))
        for f in fields:
            np.testing.assert_allclose(f.values, g.nodes + (0.2 - f.time),
                                       atol=g.dx ** 2)

    def test_cfl_violation_rejected_before_stepping(self, preset_5_1):
        g = GridPair.build(0.25, 1e-3, (-2, 2), 0.05)
        with pytest.raises(ConfigError):
            solve_case1(preset_5_1, g, FdScheme(dx=g.dx, dt=1e-3))

    def test_blow_up_error_carries_slice_index(self):
        p = make_problem(b=lambda t, x, y, z, u: 0.0 * x,
                         sigma=lambda t, x, y, z, u: 1.0 + 0.0 * x,
                         f=lambda t, x, y, z, u: np.exp(30.0 * y),
                         phi=lambda x: x, T=0.5)
        g = GridPair.build(0.5, 0.01, (-2, 2), 0.1)
        with pytest.raises(BlowUpError) as err:
            solve_case1(p, g, FdScheme(dx=g.dx, dt=0.9 * g.dx ** 2))
        assert err.value.slice_index is not None

    def test_value_monotone_on_preset_one(self, preset_5_1):
        g = GridPair.build(0.25, 2.5e-3, (-2, 2), 0.05)
        scheme = FdScheme(dx=g.dx, dt=terminal_cfl_dt(preset_5_1, g))
        fields = solve_case1(preset_5_1, g, scheme)
        for f in fields:
            assert np.min(np.diff(f.values)) >= -1e-6

    def test_wrong_case_rejected(self, preset_5_2):
        g = GridPair.build(0.25, 1e-3, (-2, 2), 0.1)
        with pytest.raises(InputError):
            solve_case1(preset_5_2, g, FdScheme(dx=g.dx, dt=1e-4))


@pytest.fixture(scope="module")
def run(preset_5_2):
    g = GridPair.build(0.25, 2.5e-3, (-2, 2), 0.05)
    scheme = FdScheme(dx=g.dx, dt=terminal_cfl_dt(preset_5_2, g))
    return g, solve_case2(preset_5_2, g, scheme)


class TestSolveCase2:
    def test_terminal_slice_matches_terminal_data(self, run):
        g, fields = run
        np.testing.assert_allclose(fields[-1].values, g.nodes, atol=0.0)

    def test_companion_solves_linear_closed_form(self, run, preset_5_2):
        # V = -p x / (1 + p L) with p the clamped discrete gradient
        g, fields = run
        from fbcontrol.hjb import _derivatives
        for f in fields:
            p, _ = _derivatives(f.values, g.dx)
            a = np.maximum(p, 0.0)
            closed = -a * f.nodes / (1.0 + a * preset_5_2.L_sigma)
            np.testing.assert_allclose(f.companion, closed, atol=1e-10)

    def test_algebraic_residuals_recomputable(self, run, preset_5_2):
        _, fields = run
        for f in fields:
            assert algebraic_residuals(preset_5_2, f).max() <= 1e-10

    def test_zero_lipschitz_matches_independent_stepper(self):
        # with L = 0 the algebraic equation degenerates to V = -p x;
        # a test-local explicit stepper with that closed form must agree
        p = example_5_2(l_sigma=0.0, check_constants=False)
        g = GridPair.build(0.1, 0.002, (-1.5, 1.5), 0.05)
        dt = terminal_cfl_dt(p, g)
        scheme = FdScheme(dx=g.dx, dt=dt)
        fields = solve_case2(p, g, scheme)

        # independent oracle: same march, V = -p*x substituted explicitly
        controls = np.asarray(p.control_set)
        xs = g.nodes
        W = xs.copy()
        oracle = {len(g.times) - 1: W.copy()}
        for i in range(len(g.times) - 2, -1, -1):
            remaining = g.times[i + 1] - g.times[i]
            while remaining > 1e-15:
                grad = np.empty_like(W)
                grad[1:-1] = (W[2:] - W[:-2]) / (2 * g.dx)
                grad[0] = (W[1] - W[0]) / g.dx
                grad[-1] = (W[-1] - W[-2]) / g.dx
                curv = np.zeros_like(W)
                curv[1:-1] = (W[2:] - 2 * W[1:-1] + W[:-2]) / g.dx ** 2
                V = np.maximum(grad, 0.0) * (-xs)
                sig = -xs
                h_u = grad[None, :] * (-np.maximum(xs, 0.0) - 4 * W + controls[:, None]) \
                    + (2 * xs - np.maximum(W, 0.0) - V + controls[:, None])
                bound = 0.9 * g.dx ** 2 / np.max(sig * sig)
                step = min(dt, bound, remaining)
                W = W + step * (h_u.max(axis=0) + 0.5 * sig * sig * curv)
                remaining -= step
            oracle[i] = W.copy()
        for i, f in enumerate(fields):
            np.testing.assert_allclose(f.values, oracle[i], atol=1e-12)
            grad = np.empty_like(oracle[i])
            grad[1:-1] = (oracle[i][2:] - oracle[i][:-2]) / (2 * g.dx)
            grad[0] = (oracle[i][1] - oracle[i][0]) / g.dx
            grad[-1] = (oracle[i][-1] - oracle[i][-2]) / g.dx
            np.testing.assert_allclose(f.companion,
                                       np.maximum(grad, 0.0) * (-xs), atol=1e-12)

    def test_clamp_events_counted_for_decreasing_terminal(self):
        import dataclasses
        p = dataclasses.replace(example_5_2(check_constants=False),
                                phi=lambda x: -x, check_constants=False)
        g = GridPair.build(0.05, 1e-3, (-1, 1), 0.1)
        scheme = FdScheme(dx=g.dx, dt=terminal_cfl_dt(p, g))
        fields = solve_case2(p, g, scheme)
        assert fields.report.clamp_count > 0
        assert fields.report.clamp_fraction > 0.5

    def test_wrong_case_rejected(self, preset_5_1):
        g = GridPair.build(0.25, 1e-3, (-2, 2), 0.1)
        with pytest.raises(InputError):
            solve_case2(preset_5_1, g, FdScheme(dx=g.dx, dt=1e-5))


class TestScheme:
    def test_invalid_parameters_rejected(self):
        with pytest.raises(ConfigError):
            FdScheme(dx=0.0, dt=1e-3)
        with pytest.raises(ConfigError):
            FdScheme(dx=0.1, dt=1e-3, theta=1.5)

    def test_cfl_bound_formula(self):
        s = FdScheme(dx=0.1, dt=1e-3, theta=0.5)
        assert s.cfl_bound(4.0) == pytest.approx(0.5 * 0.01 / 4.0)
        assert s.cfl_bound(0.0) == np.inf

import numpy as np
import pytest

from fbcontrol import fbsde
from fbcontrol.control import evaluate_policy, value_function_dpp
from fbcontrol.errors import InputError, StepTooLargeError
from fbcontrol.grids import GridPair, LinearField
from fbcontrol.fbsde import semigroup_apply

from conftest import sup_driver_problem, zero_problem


class TestValueFunctionDpp:
    def test_zero_coefficients_keep_terminal(self):
        p = zero_problem(T=0.5)
        g = GridPair.build(0.5, 0.05, (-2, 2), 0.1)
        fields, policy = value_function_dpp(p, g)
        target = np.sin(g.nodes) + g.nodes
        for f in fields:
            np.testing.assert_allclose(f.values, target, atol=1e-12)
        assert policy.indices.shape == (g.times.size - 1, g.nodes.size)

    def test_sup_of_linear_driver(self):
        # f = u over 21 points on [-1, 1]: W = x + (T - t), policy = +1
        p = sup_driver_problem(T=0.2)
        g = GridPair.build(0.2, 0.01, (-1.5, 1.5), 0.05)
        fields, policy = value_function_dpp(p, g)
        for f in fields:
            np.testing.assert_allclose(f.values, g.nodes + (0.2 - f.time), atol=1e-9)
        assert np.all(policy.indices == len(p.control_set) - 1)

    def test_terminal_slice_is_phi(self, preset_5_1):
        g = GridPair.build(0.25, 1e-3, (-2, 2), 0.1)
        fields, _ = value_function_dpp(preset_5_1, g)
        np.testing.assert_allclose(fields[-1].values, g.nodes, atol=0.0)

    def test_tie_break_takes_lowest_control_index(self):
        # driver f = |u|: u = -1 and u = +1 tie; the first index must win
        p = sup_driver_problem(T=0.1)
        import dataclasses
        p = dataclasses.replace(p, f=lambda t, x, y, z, u: np.abs(u) + 0.0 * x)
        g = GridPair.build(0.1, 0.01, (-1, 1), 0.1)
        _, policy = value_function_dpp(p, g)
        assert np.all(policy.indices == 0)

    def test_step_above_bound_raises_with_bound(self, preset_5_1):
        g = GridPair.build(0.25, 0.016, (-2, 2), 0.1)
        with pytest.raises(StepTooLargeError) as err:
            value_function_dpp(preset_5_1, g)
        assert 0 < err.value.delta0 < 0.016


@pytest.fixture(scope="module")
def run_5_2(preset_5_2):
    g = GridPair.build(0.25, 0.005, (-2, 2), 0.1)
    fields, policy = value_function_dpp(preset_5_2, g)
    return g, fields, policy


class TestDominanceAndPolicies:
    def test_fixed_controls_are_dominated(self, preset_5_2, run_5_2):
        # one semigroup step with any fixed control stays below the max
        g, fields, _ = run_5_2
        i = len(fields) // 2
        interp = LinearField(g.nodes, fields[i + 1].values)
        for u in (-1.0, 0.0, 1.0):
            for x in (-1.5, -0.4, 0.9):
                y = semigroup_apply(preset_5_2, fields[i].time, x, g.dt, u, interp, 1)
                w = float(LinearField(g.nodes, fields[i].values)(x))
                assert y <= w + 1e-9

    def test_extracted_policy_reaches_the_value(self, preset_5_2, run_5_2):
        g, fields, policy = run_5_2
        j = evaluate_policy(preset_5_2, policy, g)
        gap = np.abs(j.matrix() - fields.matrix())
        assert gap.max() <= 1e-8

    def test_constant_policy_stays_below_value(self, preset_5_2, run_5_2):
        g, fields, policy = run_5_2
        for u in (-1.0, 0.5):
            j = fbsde.solve_fixed_control(preset_5_2, lambda t, x, uu=u: uu, g,
                                          preset_5_2.phi)
            assert np.max(j.matrix() - fields.matrix()) <= 1e-8

    def test_value_field_monotone_in_state(self, run_5_2):
        g, fields, _ = run_5_2
        for f in fields:
            assert np.min(np.diff(f.values)) >= -1e-6

    def test_policy_shape_mismatch_rejected(self, preset_5_2, run_5_2):
        g, _, policy = run_5_2
        other = GridPair.build(0.25, 0.005, (-2, 2), 0.2)
        with pytest.raises(InputError):
            evaluate_policy(preset_5_2, policy, other)


class TestPartitionConsistency:
    def test_refining_delta_converges(self, preset_5_2):
        # |W_delta - W_delta/2| should shrink as delta shrinks
        box, dx = (-2, 2), 0.1
        runs = {}
        for delta in (0.01, 0.005, 0.0025):
            g = GridPair.build(0.25, delta, box, dx)
            fields, _ = value_function_dpp(preset_5_2, g)
            runs[delta] = fields[0].values
        d1 = np.max(np.abs(runs[0.01] - runs[0.005]))
        d2 = np.max(np.abs(runs[0.005] - runs[0.0025]))
        assert d2 <= d1

"""Shared problem factories for the test suite.

The degenerate instances (zero coefficients, constant diffusion) satisfy
the stacked-map monotonicity only with all-zero constants, so they are
built with check_constants=False.
"""

from __future__ import annotations

import numpy as np
import pytest

from fbcontrol.model import ControlProblem
from fbcontrol.presets import default_control_set, example_5_1, example_5_2


def make_problem(b, sigma, f, phi, *, control_set=(0.0,), T=1.0, K=1.0, L=2.0,
                 L_sigma=0.0, beta1=0.0, beta2=0.0, mu1=1.0,
                 sigma_depends_on_z=False, sigma_depends_on_u=False,
                 name="test") -> ControlProblem:
    return ControlProblem(
        n=1, d=1, b=b, sigma=sigma, f=f, phi=phi, G=np.array([[1.0]]),
        beta1=beta1, beta2=beta2, mu1=mu1, K=K, L=L, L_sigma=L_sigma,
        control_set=control_set, T=T,
        sigma_depends_on_z=sigma_depends_on_z,
        sigma_depends_on_u=sigma_depends_on_u,
        name=name, check_constants=False)


def zero_problem(phi=None, T=1.0) -> ControlProblem:
    if phi is None:
        phi = lambda x: np.sin(x) + x
    return make_problem(
        b=lambda t, x, y, z, u: 0.0 * x,
        sigma=lambda t, x, y, z, u: 0.0 * x,
        f=lambda t, x, y, z, u: 0.0 * x,
        phi=phi, T=T, K=2.0, name="zero")


def unit_diffusion_problem(f_value=0.0, T=0.2) -> ControlProblem:
    """b = 0, sigma = 1, driver constant, identity terminal data."""
    return make_problem(
        b=lambda t, x, y, z, u: 0.0 * x,
        sigma=lambda t, x, y, z, u: 1.0 + 0.0 * x,
        f=lambda t, x, y, z, u: f_value + 0.0 * x,
        phi=lambda x: x, T=T, name="unit-diffusion")


def sup_driver_problem(T=0.2, controls=21) -> ControlProblem:
    """b = 0, sigma = 1, f = u: the value is x + (T - t) with policy +1."""
    return make_problem(
        b=lambda t, x, y, z, u: 0.0 * x,
        sigma=lambda t, x, y, z, u: 1.0 + 0.0 * x,
        f=lambda t, x, y, z, u: u + 0.0 * x,
        phi=lambda x: x, T=T,
        control_set=default_control_set(controls), name="sup-driver")


def transport_problem(T=0.2) -> ControlProblem:
    """sigma = 0, b = 0, f = u: pure time integration of the sup."""
    return make_problem(
        b=lambda t, x, y, z, u: 0.0 * x,
        sigma=lambda t, x, y, z, u: 0.0 * x,
        f=lambda t, x, y, z, u: u + 0.0 * x,
        phi=lambda x: x, T=T,
        control_set=default_control_set(21), name="transport")


@pytest.fixture(scope="session")
def preset_5_1():
    return example_5_1()


@pytest.fixture(scope="session")
def preset_5_2():
    return example_5_2()

"""Built-in problem presets.

Both worked presets are scalar (n = d = 1) with identity terminal data
and G = 1.  The control space defaults to 21 equispaced points on
[-1, 1]; the interval is a recorded, configurable choice (the compact
control space has to be discretized somehow for sup-evaluation).

``example_5_1``: diffusion depends on the control, not on z.  The
stacked-map monotonicity form is identically -2 (dx)^2, so the declared
constants (beta1, beta2, mu1) = (2, 0, 1) are exact, and the tightest
per-coefficient Lipschitz ratio is 5.

``example_5_2``: diffusion depends on z through a small Lipschitz
constant L_sigma, not on the control.  Expanding the monotonicity form
and absorbing the positive-part cross terms with Young's inequality
gives the declared constants (1, min(3, L_sigma), 1).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .model import ControlProblem


def default_control_set(count: int = 21, low: float = -1.0, high: float = 1.0) -> tuple:
    if count < 1 or high < low:
        raise ConfigError("control set needs count >= 1 and high >= low")
    if count == 1:
        return (0.5 * (low + high),)
    return tuple(np.linspace(low, high, count))


def example_5_1(T: float = 0.25, control_set: tuple | None = None) -> ControlProblem:
    """Control-dependent diffusion preset."""
    if control_set is None:
        control_set = default_control_set()
    return ControlProblem(
        n=1, d=1,
        b=lambda t, x, y, z, u: 3.0 * x + 5.0 * z,
        sigma=lambda t, x, y, z, u: 4.0 * x - 5.0 * y + u,
        f=lambda t, x, y, z, u: 2.0 * x + 3.0 * y + 4.0 * z + u,
        phi=lambda x: x,
        G=np.array([[1.0]]),
        beta1=2.0, beta2=0.0, mu1=1.0,
        K=5.0, L=10.0, L_sigma=0.0,
        control_set=control_set,
        T=T,
        sigma_depends_on_z=False,
        sigma_depends_on_u=True,
        name="example_5_1",
    )


def example_5_2(T: float = 0.25, l_sigma: float = 0.05,
                control_set: tuple | None = None,
                check_constants: bool = True) -> ControlProblem:
    """Z-dependent diffusion preset; ``l_sigma`` must be small for the
    contraction scheme (the step-bound probe rejects large values)."""
    if l_sigma < 0:
        raise ConfigError("l_sigma must be nonnegative")
    if control_set is None:
        control_set = default_control_set()
    return ControlProblem(
        n=1, d=1,
        b=lambda t, x, y, z, u: -np.maximum(x, 0.0) - 4.0 * y + u,
        sigma=lambda t, x, y, z, u: -x - l_sigma * z,
        f=lambda t, x, y, z, u: 2.0 * x - np.maximum(y, 0.0) - z + u,
        phi=lambda x: x,
        G=np.array([[1.0]]),
        beta1=1.0, beta2=min(3.0, l_sigma), mu1=1.0,
        K=4.0, L=6.0, L_sigma=l_sigma,
        control_set=control_set,
        T=T,
        sigma_depends_on_z=True,
        sigma_depends_on_u=False,
        name="example_5_2",
        check_constants=check_constants,
    )


PRESETS = {
    "example_5_1": example_5_1,
    "example_5_2": example_5_2,
}


def by_name(name: str, **kwargs) -> ControlProblem:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    if name != "example_5_2":
        kwargs.pop("l_sigma", None)
        kwargs.pop("check_constants", None)
    return builder(**kwargs)

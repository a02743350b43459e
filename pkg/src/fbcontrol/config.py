"""Run configuration: declarative problem + grid + tolerance settings.

Configs come from JSON or TOML files plus command-line overrides.  A
problem is selected either by preset name or by a coefficient table in
the expression grammar of :mod:`.expressions`.  The resolved config is
embedded verbatim in every output file for provenance; identical config
plus seed must give bitwise-identical outputs.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .expressions import compile_expression
from .grids import GridPair
from .model import ControlProblem
from .presets import by_name, default_control_set

ENV_OUTPUT_DIR = "FBCONTROL_OUTPUT_DIR"

_COEFFICIENT_KEYS = ("b", "sigma", "f", "phi")
_CONSTANT_DEFAULTS = {"beta1": 0.0, "beta2": 0.0, "mu1": 0.0,
                      "K": 1.0, "L": 1.0, "l_sigma": 0.0}


@dataclass
class RunConfig:
    """Everything one run needs; field names double as config-file keys."""

    preset: str | None = None
    coefficients: dict | None = None
    T: float = 0.25
    l_sigma: float = 0.05
    box: tuple | None = (-2.0, 2.0)
    dx: float = 0.02
    delta: float = 1e-3
    controls: int = 21
    control_low: float = -1.0
    control_high: float = 1.0
    lattice: str = "trinomial"
    dt_pde: float | None = None
    theta: float = 0.9
    tolerance: float = 1e-10
    algebraic_tolerance: float = 1e-12
    samples: int = 1000
    seed: int = 0
    out_dir: str = ""
    auto_delta: bool = False
    threads: int = 1
    plots: bool = True
    emit_plot_data: bool = False
    checks: tuple = ("comparison", "regularity", "flow", "cross")

    def __post_init__(self):
        if self.out_dir == "":
            self.out_dir = os.environ.get(ENV_OUTPUT_DIR, "fbcontrol-out")
        if self.preset is None and self.coefficients is None:
            raise ConfigError("config must select a preset or define coefficients")
        if self.preset is not None and self.coefficients is not None:
            raise ConfigError("config may not set both preset and coefficients")
        for key in ("T", "dx", "delta", "theta", "tolerance", "algebraic_tolerance"):
            if float(getattr(self, key)) <= 0:
                raise ConfigError(f"config field {key!r} must be positive")
        if self.dt_pde is not None and self.dt_pde <= 0:
            raise ConfigError("config field 'dt_pde' must be positive")
        if self.controls < 1:
            raise ConfigError("config field 'controls' must be >= 1")
        if self.samples < 1:
            raise ConfigError("config field 'samples' must be >= 1")
        if self.lattice != "trinomial":
            raise ConfigError(f"unknown lattice {self.lattice!r}; available: trinomial")
        if self.box is not None:
            self.box = (float(self.box[0]), float(self.box[1]))
            if self.box[1] <= self.box[0]:
                raise ConfigError("config field 'box' must have positive width")
        if self.threads < 1:
            raise ConfigError("config field 'threads' must be >= 1")
        self.checks = tuple(self.checks)
        unknown = set(self.checks) - {"comparison", "regularity", "flow", "cross"}
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            try:
                data = tomllib.loads(text)
            except Exception as exc:
                raise ConfigError(f"malformed TOML in {path}: {exc}") from exc
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: "
                    f"{exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold an object/table")
        data.update(overrides)
        return cls.from_mapping(data)

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}; "
                              f"known fields: {sorted(known)}")
        return cls(**data)

    def resolved(self) -> dict:
        out = dataclasses.asdict(self)
        out["box"] = list(self.box) if self.box is not None else None
        out["checks"] = list(self.checks)
        return out

    def build_problem(self) -> ControlProblem:
        control_set = default_control_set(self.controls, self.control_low,
                                          self.control_high)
        if self.preset is not None:
            return by_name(self.preset, T=self.T, control_set=control_set,
                           l_sigma=self.l_sigma)
        spec = dict(self.coefficients or {})
        missing = [k for k in _COEFFICIENT_KEYS if k not in spec]
        if missing:
            raise ConfigError(f"coefficient table is missing {missing}")
        fns = {k: compile_expression(spec.pop(k)) for k in _COEFFICIENT_KEYS}
        constants = dict(_CONSTANT_DEFAULTS)
        flags = {"sigma_depends_on_z": bool(spec.pop("sigma_depends_on_z", False)),
                 "sigma_depends_on_u": bool(spec.pop("sigma_depends_on_u", False)),
                 "check_constants": bool(spec.pop("check_constants", True))}
        for key in list(spec):
            if key in constants:
                constants[key] = float(spec.pop(key))
        if spec:
            raise ConfigError(f"unknown coefficient-table fields: {sorted(spec)}")
        phi_expr = fns.pop("phi")
        return ControlProblem(
            n=1, d=1,
            b=fns["b"], sigma=fns["sigma"], f=fns["f"],
            phi=lambda x: phi_expr(0.0, x, 0.0, 0.0, 0.0),
            G=np.array([[1.0]]),
            beta1=constants["beta1"], beta2=constants["beta2"], mu1=constants["mu1"],
            K=constants["K"], L=constants["L"], L_sigma=constants["l_sigma"],
            control_set=control_set, T=self.T,
            name="custom",
            **flags,
        )

    def build_grids(self) -> GridPair:
        if self.box is None:
            raise ConfigError("truncation box is required to build grids")
        return GridPair.build(self.T, self.delta, self.box, self.dx)

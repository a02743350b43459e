"""Command-line surface: validate / solve / verify / cross-check.

Exit codes: 0 ok, 1 check failure, 2 configuration error, 3 numerical
failure.  Output files (delimited fields, JSON reports, and the report
figures) land in the configured output directory; the default comes from
the FBCONTROL_OUTPUT_DIR environment variable.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import control, fbsde, hjb, report, verify
from .algebraic import AlgebraicConfig
from .config import ENV_OUTPUT_DIR, RunConfig
from .errors import (BlowUpError, ConfigError, FbcontrolError, InputError,
                     NonContractionError, NonConvergenceError, StepTooLargeError)
from .grids import GridPair
from .model import BoxSampler, contraction_step_bound, validate_lipschitz, validate_monotonicity

_CONFIG_FIELD_BY_FLAG = {
    "preset": "preset",
    "l_sigma": "l_sigma",
    "horizon": "T",
    "box": "box",
    "dx": "dx",
    "delta": "delta",
    "controls": "controls",
    "control_low": "control_low",
    "control_high": "control_high",
    "dt_pde": "dt_pde",
    "theta": "theta",
    "tolerance": "tolerance",
    "algebraic_tolerance": "algebraic_tolerance",
    "samples": "samples",
    "seed": "seed",
    "out": "out_dir",
    "auto_delta": "auto_delta",
    "threads": "threads",
    "plots": "plots",
    "emit_plot_data": "emit_plot_data",
    "checks": "checks",
}


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None,
                     help="JSON or TOML config file; flags override its fields")
    sub.add_argument("--preset", default=None,
                     help="built-in problem preset (example_5_1, example_5_2)")
    sub.add_argument("--l-sigma", dest="l_sigma", type=float, default=None,
                     help="Lipschitz constant of sigma in z for example_5_2")
    sub.add_argument("-T", "--horizon", dest="horizon", type=float, default=None)
    sub.add_argument("--box", nargs=2, type=float, default=None,
                     metavar=("LO", "HI"), help="space truncation box")
    sub.add_argument("--dx", type=float, default=None)
    sub.add_argument("--delta", type=float, default=None,
                     help="dynamic-programming time step")
    sub.add_argument("--controls", type=int, default=None,
                     help="number of control points")
    sub.add_argument("--control-low", dest="control_low", type=float, default=None)
    sub.add_argument("--control-high", dest="control_high", type=float, default=None)
    sub.add_argument("--dt-pde", dest="dt_pde", type=float, default=None,
                     help="finite-difference time step (default: CFL prescan value)")
    sub.add_argument("--theta", type=float, default=None, help="CFL safety factor")
    sub.add_argument("--tolerance", type=float, default=None,
                     help="one-step fixed-point tolerance")
    sub.add_argument("--algebraic-tolerance", dest="algebraic_tolerance",
                     type=float, default=None)
    sub.add_argument("--samples", type=int, default=None,
                     help="validator sample count")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", type=str, default=None,
                     help=f"output directory (default: ${ENV_OUTPUT_DIR} or ./fbcontrol-out)")
    sub.add_argument("--auto-delta", dest="auto_delta", action="store_true",
                     default=None, help="shrink delta to the contraction bound "
                     "instead of failing")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker-count cap (solvers are vectorized in-process)")
    sub.add_argument("--no-plots", dest="plots", action="store_false", default=None,
                     help="skip rendering report figures")
    sub.add_argument("--emit-plot-data", dest="emit_plot_data", action="store_true",
                     default=None, help="also write wide x-vs-W columns per slice")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbcontrol",
        description="Value functions of control problems driven by fully "
                    "coupled forward-backward SDEs: lattice dynamic programming, "
                    "finite-difference HJB solvers, and property checks.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("validate", help="sampled checks of the structural assumptions")
    _add_common(p)

    p = subs.add_parser("solve", help="compute value fields")
    _add_common(p)
    p.add_argument("--pipeline", choices=("dpp", "hjb", "both"), default="both")

    p = subs.add_parser("verify", help="run the property-check suite")
    _add_common(p)
    p.add_argument("--checks", type=str, default=None,
                   help="comma-separated subset of comparison,regularity,flow,cross "
                        "(empty string selects nothing)")

    p = subs.add_parser("cross-check", help="cross-validate the two pipelines")
    _add_common(p)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for flag, field in _CONFIG_FIELD_BY_FLAG.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag == "box":
            value = (value[0], value[1])
        if flag == "checks":
            value = tuple(c for c in value.split(",") if c)
        overrides[field] = value
    if args.config is not None:
        return RunConfig.from_file(args.config, **overrides)
    return RunConfig.from_mapping(overrides)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _probe_delta0(problem, cfg: RunConfig, grids: GridPair) -> float:
    probe_x = float(grids.nodes[np.argmax(np.abs(grids.nodes))])
    return contraction_step_bound(problem, problem.phi, probe_x, grids.dt,
                                  tolerance=cfg.tolerance)


def _grids_with_step_guard(problem, cfg: RunConfig) -> tuple[GridPair, float]:
    """Build grids and resolve the admissible step, auto-shrinking when
    ``--auto-delta`` was given (never silently)."""
    grids = cfg.build_grids()
    delta0 = _probe_delta0(problem, cfg, grids)
    if grids.dt > delta0 * (1 + 1e-12):
        if not cfg.auto_delta:
            raise StepTooLargeError(
                f"configured delta {grids.dt:g} exceeds the admissible "
                f"contraction bound {delta0:g}; rerun with --auto-delta or a "
                "smaller --delta", delta0=delta0)
        print(f"auto-delta: shrinking delta {grids.dt:g} -> {delta0:g}")
        grids = grids.with_delta(delta0)
    return grids, delta0


def _scheme_for(problem, cfg: RunConfig, grids: GridPair) -> hjb.FdScheme:
    alg = AlgebraicConfig(tolerance=cfg.algebraic_tolerance)
    dt = cfg.dt_pde if cfg.dt_pde is not None else hjb.terminal_cfl_dt(
        problem, grids, cfg.theta, alg)
    return hjb.FdScheme(dx=grids.dx, dt=dt, theta=cfg.theta)


def _solve_hjb(problem, cfg: RunConfig, grids: GridPair):
    scheme = _scheme_for(problem, cfg, grids)
    if problem.sigma_depends_on_z:
        alg = AlgebraicConfig(tolerance=cfg.algebraic_tolerance)
        return hjb.solve_case2(problem, grids, scheme, alg), scheme
    return hjb.solve_case1(problem, grids, scheme), scheme


def cmd_validate(cfg: RunConfig) -> int:
    problem = cfg.build_problem()
    sampler = BoxSampler(seed=cfg.seed)
    mono = validate_monotonicity(problem, sampler, cfg.samples)
    lip = validate_lipschitz(problem, sampler, cfg.samples)
    out = _outdir(cfg)
    resolved = cfg.resolved()
    report.write_json(out / "validation_monotonicity.json",
                      {"report": mono.to_dict()}, resolved)
    report.write_json(out / "validation_lipschitz.json",
                      {"report": lip.to_dict()}, resolved)
    for rep in (mono, lip):
        status = "ok" if rep.passed else "VIOLATED"
        print(f"{rep.assumption}: {status} (worst violation {rep.worst_violation:.3e}, "
              f"{rep.samples} samples)")
        for note in rep.notes:
            print(f"  note: {note}")
    return 0 if (mono.passed and lip.passed) else 1


def cmd_solve(cfg: RunConfig, pipeline: str) -> int:
    problem = cfg.build_problem()
    out = _outdir(cfg)
    resolved = cfg.resolved()
    status = 0
    fields_dpp = None
    fields_hjb = None
    grids, delta0 = _grids_with_step_guard(problem, cfg)

    if pipeline in ("dpp", "both"):
        fields_dpp, policy = control.value_function_dpp(
            problem, grids, tolerance=cfg.tolerance, delta0=delta0)
        report.write_fields_csv(out / "fields_dpp.csv", fields_dpp, resolved)
        report.write_json(out / "report_dpp.json",
                          {"report": fields_dpp.report.to_dict()}, resolved)
        report.write_policy_csv(out / "policy_dpp.csv", policy, resolved)
        if cfg.emit_plot_data:
            report.write_plot_data(out / "plotdata_dpp.csv", fields_dpp, resolved)
        if cfg.plots:
            report.render_fields_figure(out / "fields_dpp.png", fields_dpp,
                                        f"{problem.name or 'problem'}: dynamic programming")
        print(f"dpp: {len(fields_dpp)} slices, max sweeps {fields_dpp.report.max_sweeps}, "
              f"max ratio {fields_dpp.report.max_contraction_ratio:.3f}")

    if pipeline in ("hjb", "both"):
        fields_hjb, scheme = _solve_hjb(problem, cfg, grids)
        residuals = None
        if fields_hjb[0].companion is not None:
            alg = AlgebraicConfig(tolerance=cfg.algebraic_tolerance)
            residuals = [hjb.algebraic_residuals(problem, f, alg) for f in fields_hjb]
        report.write_fields_csv(out / "fields_hjb.csv", fields_hjb, resolved,
                                residuals=residuals)
        report.write_json(out / "report_hjb.json",
                          {"report": fields_hjb.report.to_dict()}, resolved)
        if cfg.emit_plot_data:
            report.write_plot_data(out / "plotdata_hjb.csv", fields_hjb, resolved)
        if cfg.plots:
            report.render_fields_figure(out / "fields_hjb.png", fields_hjb,
                                        f"{problem.name or 'problem'}: finite differences")
        print(f"hjb: {fields_hjb.report.steps} steps, min dt "
              f"{fields_hjb.report.min_applied_dt:.3e}")

    if pipeline == "both":
        outcome = verify.cross_validate(problem, grids, grids,
                                        tolerance=cfg.tolerance, delta0=delta0,
                                        fields_dpp=fields_dpp, fields_hjb=fields_hjb)
        report.write_json(out / "cross_check.json",
                          {"outcome": outcome.to_dict()}, resolved)
        if cfg.plots:
            report.render_discrepancy_figure(out / "discrepancy.png", fields_dpp,
                                             fields_hjb, "pipeline discrepancy")
        status = 0 if outcome.passed else 1
        print(f"cross-check: max interior discrepancy {outcome.measured:.5f} "
              f"(budget {outcome.threshold:g}) -> {'ok' if outcome.passed else 'FAIL'}")
    return status


def cmd_cross_check(cfg: RunConfig) -> int:
    return cmd_solve(cfg, pipeline="both")


def cmd_verify(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    resolved = cfg.resolved()
    if not cfg.checks:
        print("warning: empty check selection; nothing verified")
        report.write_json(out / "verify_report.json",
                          {"outcomes": [], "passed": True,
                           "warning": "empty check selection"}, resolved)
        return 0
    problem = cfg.build_problem()
    grids, delta0 = _grids_with_step_guard(problem, cfg)
    outcomes: list[verify.CheckOutcome] = []

    fields_dpp, policy = control.value_function_dpp(
        problem, grids, tolerance=cfg.tolerance, delta0=delta0)

    if "comparison" in cfg.checks:
        phi = problem.phi
        outcomes.append(verify.check_comparison(
            problem, lambda x: phi(x) + 0.5, phi, grids,
            tolerance=cfg.tolerance, delta0=delta0))

    if "regularity" in cfg.checks:
        fine = GridPair.build(grids.horizon, grids.dt / 2,
                              (float(grids.nodes[0]), float(grids.nodes[-1])),
                              grids.dx / 2)
        fine_delta0 = min(delta0, fine.dt)
        fields_fine, _ = control.value_function_dpp(
            problem, fine, tolerance=cfg.tolerance, delta0=fine_delta0)
        outcomes.extend(verify.check_regularity(
            fields_dpp, reference=verify.regularity_constants(fields_fine)))

    if "flow" in cfg.checks:
        outcomes.append(verify.check_flow_consistency(
            problem, policy, grids, tolerance=cfg.tolerance))

    if "cross" in cfg.checks:
        fields_hjb, _ = _solve_hjb(problem, cfg, grids)
        outcomes.append(verify.cross_validate(
            problem, grids, grids, tolerance=cfg.tolerance, delta0=delta0,
            fields_dpp=fields_dpp, fields_hjb=fields_hjb))

    passed = all(o.passed for o in outcomes)
    report.write_json(out / "verify_report.json",
                      {"outcomes": [o.to_dict() for o in outcomes],
                       "passed": passed}, resolved)
    if cfg.plots:
        report.render_fields_figure(out / "verify_fields.png", fields_dpp,
                                    f"{problem.name or 'problem'}: verified fields")
    for o in outcomes:
        print(f"{o.check_id}: {'ok' if o.passed else 'FAIL'} "
              f"(measured {o.measured:.3e}, threshold {o.threshold:.3e})")
    return 0 if passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, args.pipeline)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "cross-check":
            return cmd_cross_check(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, InputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NonContractionError, NonConvergenceError, BlowUpError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FbcontrolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

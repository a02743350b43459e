"""Value functions of stochastic control problems driven by fully
coupled forward-backward SDEs.

Two independent pipelines compute the same value function: a backward
dynamic-programming engine built on a moment-matched noise lattice and
a one-step contraction solver for the coupled system, and explicit
finite-difference solvers for the associated HJB equations (including
the form coupled pointwise to an algebraic equation).  A property
harness cross-validates the pipelines and checks the structural facts
the value function must satisfy (comparison, monotonicity, regularity,
a-priori bounds).
"""

from .algebraic import AlgebraicConfig, AlgebraicSolution, h_representation, solve_pointwise
from .config import RunConfig
from .control import evaluate_policy, value_function_dpp
from .errors import (BlowUpError, ConfigError, FbcontrolError, InputError,
                     NonContractionError, NonConvergenceError, StepTooLargeError)
from .fbsde import (NoiseLattice, OneStepSolution, lattice_tree_moments,
                    one_step_solve, semigroup_apply, solve_fixed_control)
from .fields import FieldSet, PolicyField, SolveReport, ValueField
from .grids import GridPair, LinearField, default_box
from .hjb import FdScheme, hamiltonian_case1, solve_case1, solve_case2
from .model import (BoxSampler, ControlProblem, ValidationReport, assemble_A,
                    contraction_step_bound, validate_lipschitz, validate_monotonicity)
from .presets import example_5_1, example_5_2
from .verify import (CheckOutcome, check_comparison, check_flow_consistency,
                     check_regularity, cross_validate)

__version__ = "0.1.0"

__all__ = [
    "AlgebraicConfig", "AlgebraicSolution", "h_representation", "solve_pointwise",
    "RunConfig",
    "evaluate_policy", "value_function_dpp",
    "BlowUpError", "ConfigError", "FbcontrolError", "InputError",
    "NonContractionError", "NonConvergenceError", "StepTooLargeError",
    "NoiseLattice", "OneStepSolution", "lattice_tree_moments",
    "one_step_solve", "semigroup_apply", "solve_fixed_control",
    "FieldSet", "PolicyField", "SolveReport", "ValueField",
    "GridPair", "LinearField", "default_box",
    "FdScheme", "hamiltonian_case1", "solve_case1", "solve_case2",
    "BoxSampler", "ControlProblem", "ValidationReport", "assemble_A",
    "contraction_step_bound", "validate_lipschitz", "validate_monotonicity",
    "example_5_1", "example_5_2",
    "CheckOutcome", "check_comparison", "check_flow_consistency",
    "check_regularity", "cross_validate",
    "__version__",
]

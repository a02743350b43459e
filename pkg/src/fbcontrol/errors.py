"""Exception hierarchy shared by all solver modules.

The CLI maps these onto process exit codes: configuration/input problems
exit with 2, numerical failures with 3, failed checks with 1.
"""

from __future__ import annotations


class FbcontrolError(Exception):
    """Base class for all errors raised by this package."""


class InputError(FbcontrolError):
    """Bad arguments: dimension mismatch, non-finite coefficient values,
    negative gradient weight for the algebraic solver, and the like."""


class ConfigError(FbcontrolError):
    """Malformed configuration, or a pre-run gate failed (e.g. the CFL
    prescan rejected the configured time step)."""


class NonContractionError(FbcontrolError):
    """The one-step Picard iteration failed to contract: the step is too
    large for the problem's coupling, or the diffusion's Lipschitz
    constant in z is too large."""


class StepTooLargeError(NonContractionError):
    """A backward-induction run was configured with a time step above the
    admissible contraction bound.  Carries the empirically admissible step."""

    def __init__(self, message: str, delta0: float):
        super().__init__(message)
        self.delta0 = delta0


class NonConvergenceError(FbcontrolError):
    """The algebraic fixed-point solver exhausted its iteration budget
    without meeting the residual tolerance."""


class BlowUpError(FbcontrolError):
    """A finite-difference sweep produced a non-finite field.  Carries the
    index of the offending time slice."""

    def __init__(self, message: str, slice_index: int | None = None):
        super().__init__(message)
        self.slice_index = slice_index

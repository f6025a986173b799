"""Exception hierarchy.

The CLI maps these onto stable exit codes: validation problems exit 1,
numerical/convergence problems exit 2, I/O problems exit 3.
"""


class SurcmmError(Exception):
    exit_code = 1


class ValidationError(SurcmmError, ValueError):
    """Input data violates a model or file-format invariant."""

    exit_code = 1


class StructuralError(ValidationError):
    """A triangle is missing cells or has an inconsistent shape."""


class DomainError(SurcmmError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 1


class NumericalError(SurcmmError, ArithmeticError):
    """A likelihood, quadrature or optimizer produced a non-finite result."""

    exit_code = 2

    def __init__(self, message, company_id=None, stage=None):
        self.company_id = company_id
        self.stage = stage
        parts = [message]
        if company_id is not None:
            parts.append(f"company={company_id}")
        if stage is not None:
            parts.append(f"stage={stage}")
        super().__init__("; ".join(parts))


class ConvergenceError(NumericalError):
    """The outer two-stage iteration did not converge within its budget."""

    def __init__(self, message, last_iterate=None, change_norm=None, stage=None):
        self.last_iterate = last_iterate
        self.change_norm = change_norm
        if change_norm is not None:
            message = f"{message} (last change norm {change_norm:.3e})"
        super().__init__(message, stage=stage)

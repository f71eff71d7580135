"""
OpenPSPS Errors

Exception hierarchy shared by the solvers, the ingestion layer and the CLI.
The CLI maps these onto process exit codes (3 for data problems, 4 for
infeasible scenario-3 budgets).
"""

from typing import Optional


class PSPSError(Exception):
    """Base class for every error raised by openpsps."""


class DataError(PSPSError, ValueError):
    """Malformed, incomplete or inconsistent input data."""

    def __init__(self, message: str, path: Optional[str] = None, row: Optional[int] = None):
        self.path = path
        self.row = row
        context = []
        if path:
            context.append(str(path))
        if row is not None:
            context.append(f"row {row}")
        prefix = f"{':'.join(context)}: " if context else ""
        super().__init__(f"{prefix}{message}")


class NotErgodicError(PSPSError, ValueError):
    """The chain has no unique limiting distribution."""


class InfeasibleError(PSPSError):
    """No policy meets the expected-cost threshold from the start state."""


class ScaleGuardError(PSPSError, ValueError):
    """An exhaustive oracle was asked to run above desk scale."""


class DegenerateParameterError(PSPSError, ValueError):
    """A parameter makes a threshold formula undefined."""

    def __init__(self, parameter: str, value: float):
        self.parameter = parameter
        self.value = value
        super().__init__(f"Degenerate parameter {parameter}={value}: threshold is undefined")


class BudgetViolationError(PSPSError, RuntimeError):
    """A budgeted policy called an event with no budget left."""


class ConfigError(PSPSError, ValueError):
    """Artifacts or options that do not fit together."""

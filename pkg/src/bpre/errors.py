"""Exception hierarchy shared by the library and the command line runner.

Each class carries the process exit code the CLI maps it to.
"""


class BPREError(Exception):
    exit_code = 3


class ModelError(BPREError, ValueError):
    """Malformed model or configuration input."""

    exit_code = 1


class ConfigError(ModelError):
    exit_code = 1


class HypothesisViolation(BPREError):
    """A model fails one of the structural hypotheses an experiment needs.

    ``hypothesis`` is one of ``supercriticality``, ``H1``, ``H2``,
    ``nonlattice``, ``cramer``.
    """

    exit_code = 2

    def __init__(self, hypothesis: str, message: str):
        super().__init__(f"{hypothesis}: {message}")
        self.hypothesis = hypothesis


class NumericalError(BPREError):
    """Quadrature failure, exhausted simulation budget, unusable grid, ..."""

    exit_code = 3


class BudgetExceeded(NumericalError):
    pass

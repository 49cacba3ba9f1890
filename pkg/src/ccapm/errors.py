"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid user-supplied parameter (bad dimensions, out-of-range values)."""


class ContractError(RuntimeError):
    """An operation was called while its precondition does not hold."""


class SolverError(RuntimeError):
    """The MILP/LP backend failed numerically or returned an unusable status."""


class AdapterError(SolverError):
    """The external solver adapter could not run or its output could not be parsed."""

    def __init__(self, message: str, output: str = ""):
        super().__init__(message if not output else f"{message}\n--- solver output ---\n{output}")
        self.output = output

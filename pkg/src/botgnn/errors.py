"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 3, NumericalError -> 4.
"""


class BotgnnError(Exception):
    """Base class for all package errors."""


class DataError(BotgnnError):
    """Malformed or inconsistent input data (files, shapes, ids, splits)."""


class NumericalError(BotgnnError):
    """Numerical failure: non-finite values, divergence, failed gradient checks."""


class NonFiniteError(NumericalError):
    """A forward operation produced NaN or Inf."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite values produced by '{op}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class TrainingDiverged(NumericalError):
    """Training loss became non-finite at a specific epoch."""

    def __init__(self, epoch: int, cause: str = ""):
        self.epoch = epoch
        msg = f"training diverged at epoch {epoch}"
        if cause:
            msg += f": {cause}"
        super().__init__(msg)

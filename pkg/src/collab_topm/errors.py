"""Exception types shared across the package."""


class BanditError(Exception):
    """Base class for all package errors."""


class InvalidParams(BanditError, ValueError):
    """Arguments outside the documented ranges."""


class DegeneratePivot(BanditError, ValueError):
    """The mean at the pivot position ties its neighbour, so the gaps are undefined."""


class InfeasibleSpec(BanditError, ValueError):
    """A generator specification that cannot be satisfied."""


class BudgetExceeded(BanditError, RuntimeError):
    """A pull would push an agent past its time horizon."""


class RoundCapExceeded(BanditError, RuntimeError):
    """Closing a round would exceed the configured round cap."""


class InsufficientBudget(BanditError, RuntimeError):
    """The budget given to a routine floors to zero pulls somewhere in its schedule."""

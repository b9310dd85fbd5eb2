"""Exception hierarchy shared by all modules."""


class LogisticBDError(Exception):
    """Base class for package errors."""


class ParameterError(LogisticBDError, ValueError):
    """Invalid or unsupported parameter value."""


class RegimeError(ParameterError):
    """Operation is not defined for the regime of the given parameters."""


class DivergenceError(LogisticBDError, ArithmeticError):
    """A requested expectation is infinite."""


class CapExceeded(LogisticBDError, RuntimeError):
    """A simulation hit its step or time cap before absorption."""


class RejectionBudgetExceeded(LogisticBDError, RuntimeError):
    """Rejection sampling exhausted its attempt budget."""

"""Exception types shared across the toolkit."""


class CxsmcError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(CxsmcError, ValueError):
    pass


class InvalidRotationError(CxsmcError, ValueError):
    pass


class DegenerateMatrixError(CxsmcError, ValueError):
    pass


class UnsupportedOrbitError(CxsmcError, ValueError):
    pass


class DomainError(CxsmcError, ValueError):
    pass


class InvalidInertiaError(CxsmcError, ValueError):
    pass


class UndefinedDirectionError(CxsmcError, ValueError):
    pass


class IntegrationError(CxsmcError, RuntimeError):
    """Raised when a derivative evaluation returns non-finite values."""

    def __init__(self, message, t):
        super().__init__(f"{message} (t={t!r})")
        self.t = t


class InfeasiblePlanError(CxsmcError, RuntimeError):
    """Optimizer could not reach a feasible plan within its iteration budget."""

    def __init__(self, message, best_plan=None, worst_margins=None):
        super().__init__(message)
        self.best_plan = best_plan
        self.worst_margins = worst_margins or {}


class MissionFailure(CxsmcError, RuntimeError):
    """A mission phase exceeded its timeout; the partial log is attached."""

    def __init__(self, message, log=None, summary=None):
        super().__init__(message)
        self.log = log
        self.summary = summary


class ConfigError(CxsmcError, ValueError):
    """Scenario file failed validation. ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key

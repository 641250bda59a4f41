"""Exception hierarchy."""


class VariDualError(Exception):
    """Base class for all package errors."""


class UsageError(VariDualError, ValueError):
    """Invalid arguments (dimension mismatch, bad parameters)."""


class EmptyDomain(VariDualError):
    pass


class OutsideDomain(VariDualError):
    pass


class GridTooSmall(VariDualError):
    pass


class CacheTooCoarse(VariDualError):
    pass


class DualBoxExceeded(VariDualError):
    pass


class InfeasibleConstraint(VariDualError):
    pass


class InfeasibleStart(VariDualError):
    pass


__all__ = ["VariDualError", "UsageError", "EmptyDomain", "OutsideDomain", "GridTooSmall",
           "CacheTooCoarse", "DualBoxExceeded", "InfeasibleConstraint", "InfeasibleStart"]

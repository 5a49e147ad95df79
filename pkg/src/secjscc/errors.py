"""Exception hierarchy shared by every module."""


class SecJSCCError(Exception):
    """Base class for all package errors."""


class ValidationError(SecJSCCError, ValueError):
    """An object failed its construction invariants."""


class UsageError(SecJSCCError, ValueError):
    """A function was called outside its domain."""


class InfeasibleError(SecJSCCError):
    """The requested computation has no feasible answer."""


class MajorizationError(InfeasibleError):
    """A rate-deferral precondition G1 >= G2 does not hold."""


class FeasibilityError(InfeasibleError):
    """An exact enumeration would exceed the state-space cap."""


class ConsistencyError(SecJSCCError):
    """An internal invariant that must hold for valid inputs was broken."""

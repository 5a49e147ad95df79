"""Bounds and exact audits for sequential joint source-channel coding with leakage budgets."""

from .errors import (ConsistencyError, FeasibilityError, InfeasibleError, MajorizationError,
                     SecJSCCError, UsageError, ValidationError)

__version__ = "0.1.0"

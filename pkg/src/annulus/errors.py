"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` so the command line can map failures to
distinct process statuses without inspecting messages.
"""


class AnnulusError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 1


class DomainError(AnnulusError, ValueError):
    """An argument lies outside the admissible domain of an operation."""

    exit_code = 3


class StructureError(DomainError):
    """A nonlinearity violates the sign structure required of it."""


class BracketError(AnnulusError):
    """A bracketing search could not find a sign change."""

    exit_code = 4


class ResolutionError(AnnulusError):
    """A sample grid is too coarse to support a sampled verdict."""

    exit_code = 5


class StateError(AnnulusError):
    """An operation was applied to a profile in the wrong regime."""

    exit_code = 3


class DataError(AnnulusError):
    """Numerical data contradicts an expected shape (e.g. non-monotone branch)."""

    exit_code = 1


class WindowError(DomainError):
    """A sampling window touches a singular point of a functional."""

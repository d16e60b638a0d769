"""Semantic exception hierarchy for the package."""


class LdgapError(Exception):
    """Base class for all package errors."""


class ParameterError(LdgapError):
    """Invalid model/estimator/experiment parameters."""


class ResourceGuardError(LdgapError):
    """A hard size guard was exceeded (never silently truncated)."""


class DegenerateError(LdgapError):
    """A quantity is undefined for the given input (single group, empty column, ...)."""


class NumericError(LdgapError):
    """A numerical routine failed beyond its rescue strategy."""

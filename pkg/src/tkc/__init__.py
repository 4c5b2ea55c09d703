"""Temporal kernel consistency toolkit for blind video super-resolution."""

__version__ = "0.1.0"


class TKCError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(TKCError, ValueError):
    pass


class ShapeError(TKCError, ValueError):
    pass


class InsufficientDataError(TKCError, ValueError):
    pass


class ConfigurationError(TKCError):
    """Incompatible artifacts or configuration (hash mismatch, bad window sizes)."""

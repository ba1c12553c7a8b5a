"""Base exception types shared across the package."""

from __future__ import annotations


class ComatError(Exception):
    """Base class for every error this package raises deliberately."""


class ConfigError(ComatError):
    """Invalid or unresolvable run configuration (fatal, exit code 1)."""

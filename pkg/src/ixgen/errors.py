"""Exception hierarchy shared across the package."""


class IxgenError(Exception):
    """Base class for all package-specific errors."""

"""
Shared exception roots.

Modules define their own specific errors next to the code raising them;
those derive from one of the roots below so the CLI can map them to exit codes.
"""


class GestdiffError(Exception):
    """Base class for all toolkit errors."""
    pass


class DataError(GestdiffError):
    """Raised when input data or a processing stage fails (exit code 1)."""
    pass


class UsageError(GestdiffError):
    """Raised when the command line or configuration is invalid (exit code 2)."""
    pass

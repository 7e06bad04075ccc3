"""Exception types shared across the package.

Plain invalid arguments to library functions raise ValueError; the classes
here exist so the CLI can map failures to stable exit codes.
"""


class UsageError(Exception):
    """Bad command line flags or an invalid/unknown configuration key."""


class DataValidationError(Exception):
    """A dataset on disk violates the documented layout or label contract."""

"""Exception hierarchy shared across the package.

``UserInputError`` subclasses map to CLI exit code 1; anything else that
escapes is treated as an internal invariant violation (exit code 2).
"""


class DvlaeError(Exception):
    """Base class for all errors raised by this package."""


class UserInputError(DvlaeError):
    """Bad input data, configuration, or file contents."""


class ParseError(UserInputError):
    """Malformed structure file or manifest."""


class ConfigError(UserInputError):
    """Invalid or inconsistent run configuration."""


class FormatError(UserInputError):
    """Corrupt or mismatched fingerprint / embedding / report file."""

"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
broken or misaligned data exits 3, and numeric aborts exit 4.
"""


class DehazeError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ShapeError(DehazeError):
    """Operand shapes are incompatible with an operation's contract."""


class ConfigError(DehazeError):
    """Invalid configuration value, unknown key, or unsatisfiable request."""

    exit_code = 2


class DataError(DehazeError):
    """Broken dataset layout, unreadable image file, or bad file format."""

    exit_code = 3


class AlignmentError(DataError):
    """Co-registered planes (optical / SAR / mask) disagree in extent."""


class NumericError(DehazeError):
    """Non-finite values appeared where finite ones are required."""

    exit_code = 4


class DomainError(DehazeError):
    """An input lies outside an operation's mathematical domain."""


class TapeError(DehazeError):
    """Misuse of the differentiation tape (detached tensor, nesting, ...)."""

"""Exception types shared across the package.

Each carries the process exit code the CLI maps it to.
"""


class GadcError(Exception):
    exit_code = 1


class InputError(GadcError, ValueError):
    """Malformed or out-of-range input (files, shapes, arguments)."""

    exit_code = 2


class DomainError(InputError):
    """Argument outside the domain where an operation is defined."""


class CapacityError(GadcError):
    """Problem size exceeds a configured dense/oracle cap."""

    exit_code = 3


class NumericError(GadcError, ArithmeticError):
    """Non-finite intermediate or singular system."""

    exit_code = 4

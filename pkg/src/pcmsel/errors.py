"""Exception types and the process exit codes they map to."""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class PcmselError(Exception):
    """Base class for all toolkit errors."""

    exit_code = EXIT_DATA


class ValidationError(PcmselError):
    """Malformed input data or a violated invariant."""

    exit_code = EXIT_DATA


class NumericalError(PcmselError):
    """A numerical operation has no defined result on this input."""

    exit_code = EXIT_NUMERIC

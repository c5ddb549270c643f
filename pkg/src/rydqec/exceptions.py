"""Exception types shared across the package.

Each carries an exit code so the command line can map failures onto
its documented status values without string matching.
"""


class RydqecError(Exception):
    exit_code = 2


class ValidationError(RydqecError, ValueError):
    """Bad input: malformed file, bound violation, inconsistent shapes."""

    exit_code = 1


class WaveformError(ValidationError):
    def __init__(self, msg, slice_index=None):
        if slice_index is not None:
            msg = f"slice {slice_index}: {msg}"
        super().__init__(msg)
        self.slice_index = slice_index


class StepSizeError(ValidationError):
    pass


class ConfigError(ValidationError):
    def __init__(self, msg, field=None):
        if field:
            msg = f"{field}: {msg}"
        super().__init__(msg)
        self.field = field


class PropagationError(RydqecError):
    """Numerical result that can only come from a bug upstream."""


class NishimoriError(ValidationError):
    pass


class CheckpointError(RydqecError):
    pass


class UndeterminedError(RydqecError):
    """No crossing, failed bracket or similar inconclusive outcome."""

    exit_code = 3


class NoCrossingError(UndeterminedError):
    pass


class BracketError(UndeterminedError):
    pass

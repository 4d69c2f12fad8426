"""Exception types shared across the simulator and analysis modules."""


class DomainError(ValueError):
    """A physical parameter is outside its admissible domain."""


class ConfigError(ValueError):
    """A configuration document is malformed or inconsistent."""


class CapacityError(RuntimeError):
    """A requested simulation would exceed the configured memory budget."""


class ConvergenceError(RuntimeError):
    """An iterative calibration or fit failed to converge."""


class AnalysisError(ValueError):
    """An estimator received data it cannot operate on."""


class FormatError(ValueError):
    """A time-tag file violates the binary format.

    Carries the byte offset at which the violation was detected so that
    corrupt files can be inspected with a hex dump.
    """

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset

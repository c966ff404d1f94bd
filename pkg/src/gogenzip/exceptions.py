"""Exception hierarchy shared across the package."""


class GenZipError(Exception):
    """Base class for every error raised by gogenzip."""


class ContractError(GenZipError):
    """A documented precondition or invariant was violated by the caller."""


class DimensionError(GenZipError, ValueError):
    """Operand shapes do not conform."""


class InvalidArgumentError(GenZipError, ValueError):
    pass


class ContainerFormatError(GenZipError):
    """A serialized container is malformed.

    ``offset`` is the byte position where parsing failed.
    """

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class CorruptPayloadError(GenZipError):
    """A lossless blob does not decode to the expected number of values."""


class DataValidationError(GenZipError, ValueError):
    """Telemetry input failed schema or continuity checks."""


class CompatibilityError(GenZipError):
    """A checkpoint does not match the dataset or configuration it is used with."""


class TrainingError(GenZipError, RuntimeError):
    pass

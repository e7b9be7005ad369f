"""Exception hierarchy."""


class BandcastError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(BandcastError, ValueError):
    pass


class NonRealReconstruction(BandcastError, ValueError):
    """Inverse transform produced an imaginary residue beyond tolerance."""

    def __init__(self, max_imag, limit):
        super().__init__(f"imaginary residue {max_imag:.3e} exceeds tolerance {limit:.3e}")
        self.max_imag = max_imag
        self.limit = limit


class DivergedTraining(BandcastError, RuntimeError):
    def __init__(self, epoch, loss):
        super().__init__(f"non-finite training loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class ParseFailure(BandcastError, ValueError):
    """LLM response did not contain a usable numeric list."""

    def __init__(self, message, raw):
        super().__init__(message)
        self.raw = raw


class LengthMismatch(ParseFailure):
    def __init__(self, found, expected, raw):
        super().__init__(f"expected {expected} values, found {found}", raw)
        self.found = found
        self.expected = expected


class TransportFailure(BandcastError, RuntimeError):
    pass


class ConfigError(BandcastError, ValueError):
    pass


class SchemaError(BandcastError, ValueError):
    pass


class ParseError(BandcastError, ValueError):
    """A CSV cell could not be parsed as a finite number."""

    def __init__(self, row, col, value):
        super().__init__(f"row {row}, column {col!r}: cannot parse {value!r} as a finite number")
        self.row = row
        self.col = col
        self.value = value


class OrderError(BandcastError, ValueError):
    def __init__(self, row, message="timestamps must be strictly increasing"):
        super().__init__(f"row {row}: {message}")
        self.row = row


class IncompatibleCheckpoint(BandcastError, ValueError):
    pass


class MissingCheckpoint(BandcastError, FileNotFoundError):
    pass

"""Exception hierarchy.

Everything derives from :class:`SadaError`; most also subclass the builtin
that best matches so callers can catch ``ValueError``/``IndexError``.
"""


class SadaError(Exception):
    pass


class DimensionError(SadaError, ValueError):
    pass


class NumericInputError(SadaError, ValueError):
    pass


class LabelIndexError(SadaError, IndexError):
    pass


class OrderingError(SadaError, ValueError):
    pass


class EmptyInputError(SadaError, ValueError):
    pass


class IncompleteEpochError(SadaError, RuntimeError):
    def __init__(self, epoch, missing):
        self.epoch = epoch
        self.missing = list(missing)
        shown = ", ".join(str(i) for i in self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" (+{len(self.missing) - 20} more)"
        super().__init__(
            f"epoch {epoch}: no output recorded for {len(self.missing)} sample(s): {shown}{more}"
        )


class ConfigError(SadaError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DataError(SadaError):
    """Dataset could not be loaded or constructed."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class CountMismatchError(DataError):
    pass


class EmptyClassError(DataError):
    pass


class InconsistentShapeError(DataError):
    pass


class UndecodableError(DataError):
    pass


class InsufficientClassError(DataError):
    pass

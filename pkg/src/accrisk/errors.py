"""Exception hierarchy.

Every error raised by the package derives from :class:`AccRiskError` and
carries an ``exit_code`` used by the command line front end.
"""


class AccRiskError(Exception):
    exit_code = 3


# configuration -------------------------------------------------------------

class ConfigError(AccRiskError):
    exit_code = 2

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


# data ----------------------------------------------------------------------

class DataError(AccRiskError):
    exit_code = 3


class RowError(DataError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class SchemaError(RowError):
    pass


class DimensionError(RowError):
    pass


class OutOfGrid(DataError):
    pass


class EmptyIndex(DataError):
    pass


class InvalidRadius(DataError):
    pass


class EmptyInput(DataError):
    pass


class TooShort(DataError):
    pass


class SpanError(DataError):
    pass


class StageOrderError(DataError):
    pass


class EmptyEval(DataError):
    pass


class EmptyFeatureSet(DataError):
    pass


class UnknownRegion(DataError):
    pass


# numerics ------------------------------------------------------------------

class NumericError(AccRiskError):
    exit_code = 4


class DivergenceError(NumericError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")


class ShapeError(AccRiskError, ValueError):
    exit_code = 4


class BatchTooSmall(NumericError, ValueError):
    pass


class InvalidPenalty(AccRiskError, ValueError):
    exit_code = 2

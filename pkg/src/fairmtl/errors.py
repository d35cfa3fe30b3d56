"""Exception hierarchy.

Every error raised by the package derives from :class:`FairMTLError`. The three
intermediate classes map one-to-one onto CLI exit codes (2, 3 and 4).
"""


class FairMTLError(Exception):
    exit_code = 1


class ConfigError(FairMTLError, ValueError):
    """Bad parameters or usage."""

    exit_code = 2


class DataError(FairMTLError, ValueError):
    """Input data that cannot be processed."""

    exit_code = 3


class NumericalError(FairMTLError, ArithmeticError):
    exit_code = 4


class InvalidConfig(ConfigError):
    pass


class InvalidProbability(ConfigError):
    pass


class InvalidThreshold(ConfigError):
    pass


class NotFitted(ConfigError):
    pass


class EmptySample(DataError):
    pass


class InvalidValue(DataError):
    pass


class InsufficientGroupData(DataError):
    pass


class InsufficientGroups(DataError):
    pass


class UnknownGroup(DataError, KeyError):
    def __str__(self):
        # KeyError quotes its message; keep it readable
        return Exception.__str__(self)


class DegenerateLabels(DataError):
    pass


class NoLabels(DataError):
    pass


class ShapeError(DataError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    pass


class StratificationError(DataError):
    pass


class EmptyInput(DataError):
    pass


class DataLeakage(DataError):
    """Calibration pool overlaps the training rows."""

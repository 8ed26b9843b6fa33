"""Exception hierarchy. Every error raised on bad input derives from HteError."""


class HteError(Exception):
    """Base class for all package errors."""


class ConfigInvalid(HteError, ValueError):
    pass


class DataError(HteError, ValueError):
    """Problems with the trial data itself (maps to CLI exit code 3)."""


class MissingColumn(DataError):
    pass


class NonBinaryValue(DataError):
    pass


class EmptyAfterFiltering(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class NoRegionColumn(DataError):
    pass


class EmptyPartition(DataError):
    pass


class FeatureAbsent(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class ArmEmpty(DataError):
    pass


class ArmTooSmall(DataError):
    pass


class IdMismatch(DataError):
    pass


class FitError(HteError, ArithmeticError):
    """Numerical failure while fitting a model."""


class SingularDesign(FitError):
    pass


class NonFinite(FitError):
    pass


class AllZeroVariance(FitError):
    pass


class MetricError(HteError, ValueError):
    pass


class TooFewPairs(MetricError):
    pass


class DegenerateBins(MetricError):
    pass


class Unavailable(MetricError):
    pass


class SingleClass(MetricError):
    pass


class LengthMismatch(MetricError):
    pass


class ShapeMismatch(HteError, ValueError):
    pass


class UnknownKind(HteError, ValueError):
    pass

"""Exception types shared across the workbench."""


class JitsdpError(Exception):
    """Base class for all workbench errors."""


class SchemaError(JitsdpError):
    """Input file does not provide the required columns."""


class DataError(JitsdpError):
    """A row or value in the input violates the data contract."""


class EmptyDatasetError(DataError):
    """Operation received a dataset with no changesets."""


class InsufficientDataError(JitsdpError):
    """Not enough rows to perform the requested computation."""


class DegenerateTableError(JitsdpError):
    """Contingency table has a zero marginal, expected counts undefined."""


class UnsupportedDatasetError(JitsdpError):
    """Dataset lacks an optional field this analysis requires."""


class DegenerateCurveError(JitsdpError):
    """Point set or curve carries no usable one-dimensional structure."""


class CannotInterpolateError(JitsdpError):
    """Too few minority points to draw interpolation neighbours."""


class UndefinedMetricError(JitsdpError):
    """Metric is undefined for this input (e.g. single-class AUC)."""


class NumericFailureError(JitsdpError):
    """A numeric computation produced NaN or infinity."""


class PlanError(JitsdpError):
    """Experiment plan is infeasible for the given dataset."""


class ConfigError(JitsdpError):
    """Run configuration is malformed or inconsistent."""

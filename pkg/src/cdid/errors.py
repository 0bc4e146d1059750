"""Exception hierarchy shared across the package."""


class CDiDError(Exception):
    """Base class for all package errors."""


class SchemaError(CDiDError):
    """A record or file is missing a required field."""


class ValidationError(CDiDError):
    """A value violates a field invariant (range, category, finiteness)."""


class EstimandError(CDiDError):
    """An estimand cannot be formed, e.g. because a cell is empty."""


class ConfigError(CDiDError):
    """Invalid simulation or run configuration."""


class DomainError(CDiDError):
    """Arguments outside the domain of a model function."""


class DegenerateOutcomeError(CDiDError):
    """Binary labels contain a single class."""


class SeparationError(CDiDError):
    """Probit coefficients diverge, indicating (quasi-)perfect separation."""


class SupportError(CDiDError):
    """Common-support trimming cannot be performed."""


class MatchingError(CDiDError):
    """Radius matching cannot be performed."""


class AdjustmentError(CDiDError):
    """The regression bias adjustment failed."""


class DegenerateVarianceError(CDiDError):
    """Standardized difference undefined: zero variance but unequal means."""


class SurvivalError(CDiDError):
    """Kaplan-Meier estimation on invalid input."""


class InferenceError(CDiDError):
    """Too many bootstrap replications failed."""


class RankWarning(UserWarning):
    """Collinear columns were dropped from a design."""

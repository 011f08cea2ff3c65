"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, mode labels or configuration files."""


class InsufficientStatistics(ValueError):
    """An estimator was asked to condition on (or divide by) zero counts."""


class FitError(ValueError):
    """A least-squares fit could not be carried out on the given data."""

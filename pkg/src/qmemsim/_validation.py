"""Small input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import math
import numbers

from .exceptions import ConfigurationError


def check_scalar(x, name, *, min_val=None, max_val=None, include_min=True,
                 include_max=True):
    """Validate a real scalar and return it as ``float``."""
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        raise ConfigurationError(f"{name} must be a real number, got {x!r}")
    x = float(x)
    if math.isnan(x):
        raise ConfigurationError(f"{name} must not be NaN")
    if min_val is not None:
        if x < min_val or (not include_min and x == min_val):
            op = ">=" if include_min else ">"
            raise ConfigurationError(f"{name} must be {op} {min_val}, got {x}")
    if max_val is not None:
        if x > max_val or (not include_max and x == max_val):
            op = "<=" if include_max else "<"
            raise ConfigurationError(f"{name} must be {op} {max_val}, got {x}")
    return x


def check_probability(x, name):
    return check_scalar(x, name, min_val=0.0, max_val=1.0)


def check_int(x, name, *, min_val=None):
    if isinstance(x, bool) or not isinstance(x, numbers.Integral):
        raise ConfigurationError(f"{name} must be an integer, got {x!r}")
    x = int(x)
    if min_val is not None and x < min_val:
        raise ConfigurationError(f"{name} must be >= {min_val}, got {x}")
    return x

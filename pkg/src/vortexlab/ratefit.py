"""Least-squares rate fitting for exponential and power-law series."""

from dataclasses import dataclass

import numpy as np


class NonPositiveValue(ValueError):
    """A series value is <= 0 and cannot be log-fitted."""


class DegenerateFit(ValueError):
    """Fewer than two distinct abscissae; no slope is defined."""


@dataclass(frozen=True)
class RateFit:
    """Result of a least-squares fit of log(value) against an abscissa.

    For an exponential fit the abscissa is t and ``rate`` is the exponent
    in value ~ exp(intercept) * exp(rate * t).  For a power-law fit the
    abscissa is log(x) and ``rate`` is the slope in value ~ C * x**rate.
    ``r_squared`` is NaN when the data are exactly constant (flagged by
    ``exact_constant`` instead).
    """

    rate: float
    intercept: float
    r_squared: float
    exact_constant: bool = False
    n_points: int = 0


def fit_log_linear(x, values):
    """Fit log(values) = intercept + rate * x by least squares."""
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    if x.shape != values.shape or x.ndim != 1:
        raise ValueError("x and values must be 1-d arrays of equal length")
    if x.size < 2 or np.allclose(x, x[0]):
        raise DegenerateFit("need at least two distinct abscissae")
    if np.any(~np.isfinite(values)) or np.any(values <= 0.0):
        bad = int(np.argmin(values))
        raise NonPositiveValue(
            f"value {values[bad]!r} at index {bad} is not positive"
        )

    logv = np.log(values)
    xm = x - x.mean()
    lm = logv - logv.mean()
    rate = float(np.dot(xm, lm) / np.dot(xm, xm))
    intercept = float(logv.mean() - rate * x.mean())

    ss_tot = float(np.dot(lm, lm))
    if ss_tot == 0.0:
        # Exactly constant data: slope 0, R^2 undefined.
        return RateFit(rate=0.0, intercept=intercept, r_squared=float("nan"),
                       exact_constant=True, n_points=x.size)
    resid = logv - (intercept + rate * x)
    r2 = 1.0 - float(np.dot(resid, resid)) / ss_tot
    return RateFit(rate=rate, intercept=intercept, r_squared=r2,
                   n_points=x.size)


def fit_exponential(times, values):
    """Fit value ~ A * exp(rate * t); all values must be positive."""
    return fit_log_linear(times, values)


def fit_powerlaw(x, values):
    """Fit value ~ C * x**slope on log-log axes; x and values positive."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise NonPositiveValue("power-law abscissae must be positive")
    return fit_log_linear(np.log(x), values)

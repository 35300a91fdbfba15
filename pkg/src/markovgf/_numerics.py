"""Overflow-safe scalar primitives used by the closed-form losses."""

import numpy as np


def softplus_neg(z):
    """Logistic loss log(1 + exp(-z)), stable for large |z|."""
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, np.log1p(np.exp(-np.abs(z))), -z + np.log1p(np.exp(-np.abs(z))))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def log_quadratic_root(ratio, log_a):
    """log of the positive root of x**2 + (1 - ratio) x - ratio * exp(log_a) = 0.

    Evaluated in log space so that ``log_a`` may be far outside the range of
    ``exp``. ``ratio`` is a positive scalar.
    """
    log_a = np.asarray(log_a, dtype=float)
    r = float(ratio)
    # log sqrt((r-1)^2 + 4 r A)
    if r == 1.0:
        half_log_disc = 0.5 * (np.log(4.0 * r) + log_a)
    else:
        half_log_disc = 0.5 * np.logaddexp(2.0 * np.log(abs(r - 1.0)), np.log(4.0 * r) + log_a)
    if r >= 1.0:
        if r == 1.0:
            return half_log_disc - np.log(2.0)
        return np.logaddexp(np.log(r - 1.0), half_log_disc) - np.log(2.0)
    # r < 1: rationalize to avoid cancellation in (r - 1) + sqrt(...)
    return np.log(2.0 * r) + log_a - np.logaddexp(np.log(1.0 - r), half_log_disc)


def as_float(x):
    """Return a Python float for 0-d input, otherwise the array unchanged."""
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x

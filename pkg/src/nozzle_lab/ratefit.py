"""Log-log rate fitting helpers shared by the convergence and Korn studies."""

from __future__ import annotations

import numpy as np

__all__ = ["loglog_slope", "richardson_order", "floor_subtract"]


def loglog_slope(x, y):
    """Least-squares slope and intercept of log y vs log x.

    Returns (slope, C) for the model y ~ C * x**slope.  Requires positive data.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    slope, logc = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(np.exp(logc))


def richardson_order(errors, refinement_ratio=2.0):
    """Observed orders from consecutive error pairs on a refinement ladder."""
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        raise ValueError("need positive errors")
    return np.log(e[:-1] / e[1:]) / np.log(refinement_ratio)


def floor_subtract(values, floor, tiny_frac=1e-3):
    """Subtract a scheme-error floor, clipping at a small positive fraction.

    Keeps the log-log fit well defined when a value sits at or below the floor.
    """
    v = np.asarray(values, dtype=float)
    return np.maximum(v - floor, tiny_frac * np.max(v))

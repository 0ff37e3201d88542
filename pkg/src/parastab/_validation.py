"""Input validation helpers shared by the estimators and the functional API."""
from __future__ import annotations

import numbers

import numpy as np


class HypothesisError(ValueError):
    """A structural hypothesis of the boundary-control problem is violated."""


class UncontrollableError(ValueError):
    """The reduced pair (A0, B0) fails the Kalman rank test at this resolution."""


class CertificateError(RuntimeError):
    """No stability certificate could be produced for the requested design."""


class BlowUpError(RuntimeError):
    """Raised when a simulation produces NaN/overflow; carries the partial trajectory."""

    def __init__(self, message, trajectory=None, t=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.t = t


def check_finite_vector(values, name="values", length=None):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_scalar(value, name, *, positive=False, nonnegative=False, integer=False):
    if integer:
        if not isinstance(value, numbers.Integral) or isinstance(value, bool):
            raise TypeError(f"{name} must be an integer, got {value!r}")
    elif not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {value!r}")
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite")
    if positive and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if nonnegative and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def check_index(n, count, name="n"):
    check_scalar(n, name, integer=True)
    if not 1 <= n <= count:
        raise IndexError(f"{name}={n} out of range 1..{count}")
    return n

"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


def check_array(x, *, name, ndim=None, dtype=float, min_len=None):
    """Coerce `x` to a contiguous ndarray and validate its shape.

    Raises ValueError with the offending argument named, so CLI and
    library callers get the same message.
    """
    arr = np.asarray(x, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name}: expected a {ndim}-D array, got shape {arr.shape}")
    if min_len is not None and arr.shape[-1] < min_len:
        raise ValueError(
            f"{name}: needs at least {min_len} samples along the last axis, "
            f"got {arr.shape[-1]}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains NaN or Inf")
    return np.ascontiguousarray(arr)


def check_positive(value, *, name, strict=True):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise ValueError(f"{name}: expected a real number, got {value!r}")
    if strict and not value > 0:
        raise ValueError(f"{name}: must be > 0, got {value}")
    if not strict and not value >= 0:
        raise ValueError(f"{name}: must be >= 0, got {value}")
    return float(value)


def check_int(value, *, name, minimum=None, maximum=None):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise ValueError(f"{name}: expected an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name}: must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ValueError(f"{name}: must be <= {maximum}, got {value}")
    return value


def check_in(value, options, *, name):
    if value not in options:
        raise ValueError(f"{name}: must be one of {sorted(options)}, got {value!r}")
    return value

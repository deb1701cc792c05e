"""Input validation helpers shared across the package.

Arrays follow numpy conventions throughout: a "matrix" is a 2-D float64
array (rows = samples), a "tensor3" is a 3-D float64 array in
height x width x channels order (row-major, channel-last).
"""

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError


def as_float_array(x, name="array"):
    a = np.asarray(x, dtype=np.float64)
    return a


def check_finite(a, name="array"):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return a


def check_vector(x, name="vector"):
    a = as_float_array(x, name)
    if a.ndim != 1:
        raise ShapeMismatchError(f"{name} must be 1-D, got shape {a.shape}")
    return check_finite(a, name)


def check_matrix(x, name="matrix"):
    a = as_float_array(x, name)
    if a.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got shape {a.shape}")
    return check_finite(a, name)


def check_tensor3(x, name="tensor"):
    a = as_float_array(x, name)
    if a.ndim != 3:
        raise ShapeMismatchError(
            f"{name} must be 3-D (height, width, channels), got shape {a.shape}"
        )
    return check_finite(a, name)


def check_labels(y, n=None, name="labels"):
    a = np.asarray(y)
    if a.ndim != 1:
        raise ShapeMismatchError(f"{name} must be 1-D")
    a = a.astype(np.int64)
    if not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0 and 1")
    if n is not None and a.shape[0] != n:
        raise ShapeMismatchError(f"{name} length {a.shape[0]} != {n}")
    return a

"""Input validation helpers.

Small checked conversions used at every public entry point so that the
numerical code below them can assume clean float64 arrays.
"""

import numpy as np

from .errors import DegenerateInputError, DimensionError, EmptyInputError


def as_vector(x, dim=None, name="vector"):
    """Coerce to a finite 1-d float64 array, optionally of fixed length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name="matrix"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError(f"{name} contains non-finite entries")
    return arr


def as_nonzero_vector(x, dim=None, name="vector"):
    arr = as_vector(x, dim=dim, name=name)
    if not np.any(arr):
        raise DegenerateInputError(f"{name} must be nonzero")
    return arr


def as_bits(y, length=None, name="bits"):
    """Coerce to an int8 array over {-1, +1}."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {length}")
    out = arr.astype(np.int8, copy=False)
    if not np.all(np.abs(out) == 1):
        raise DegenerateInputError(f"{name} entries must be -1 or +1")
    return out


def require_nonempty(n, name="input"):
    if n < 1:
        raise EmptyInputError(f"{name} must contain at least one element")

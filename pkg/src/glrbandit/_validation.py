"""Input validation helpers shared by the estimators and the bandit code."""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionMismatch, EmptyArmSet, InvalidConfig


def check_matrix(A, name="A"):
    """Return ``A`` as a finite float64 2-d array."""
    try:
        return check_array(A, dtype=np.float64, ensure_2d=True, ensure_min_samples=1)
    except ValueError as exc:
        raise DimensionMismatch(f"{name}: {exc}") from exc


def check_matrix_stack(X, name="X", shape=None):
    """Return ``X`` as a finite float64 array of shape (n, d1, d2).

    A single 2-d matrix is promoted to a stack of one.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None, :, :]
    if X.ndim != 3:
        raise DimensionMismatch(f"{name} must be a matrix or a stack of matrices, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise EmptyArmSet(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise DimensionMismatch(f"{name} contains non-finite entries")
    if shape is not None and X.shape[1:] != tuple(shape):
        raise DimensionMismatch(f"{name} has matrix shape {X.shape[1:]}, expected {tuple(shape)}")
    return X


def check_vectors(X, dim=None, name="arms"):
    """Return ``X`` as a finite (n, dim) float64 array with n >= 1."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise EmptyArmSet(f"{name} is empty")
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatch(f"{name} have length {X.shape[1]}, expected {dim}")
    return X


def check_positive(value, name, allow_zero=False):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise InvalidConfig(f"{name} must be a finite real, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidConfig(f"{name} must be {bound}, got {value!r}")
    return float(value)


def check_probability(delta, name="delta", allow_one=False):
    if not isinstance(delta, numbers.Real) or not (0.0 < delta < 1.0 or (allow_one and delta == 1.0)):
        raise InvalidConfig(f"{name} must lie in (0, 1), got {delta!r}")
    return float(delta)


def as_generator(seed):
    """Coerce an int, SeedSequence, Generator or None into a numpy Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)

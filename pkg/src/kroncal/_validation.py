"""Input validation helpers shared by the estimators and the functional API."""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import InputError


def check_postures(U, *, name="postures", normalized=False, allow_empty=False):
    """Return ``U`` as a float64 array of shape (n, 3).

    A single posture given as a flat 3-vector is promoted to shape (1, 3).
    """
    arr = np.asarray(U, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.size == 0:
        if allow_empty:
            return arr.reshape(0, 3)
        raise InputError(f"{name} must be non-empty")
    try:
        arr = check_array(arr, dtype=np.float64, ensure_all_finite=True)
    except ValueError as exc:
        raise InputError(f"{name}: {exc}") from exc
    if arr.shape[1] != 3:
        raise InputError(f"{name} must have 3 columns (pitch, yaw, roll), got shape {arr.shape}")
    if normalized and (arr.min() < 0.0 or arr.max() > 1.0):
        raise InputError(f"{name} flagged normalized but lie outside [0, 1]")
    return arr


def check_parameters(x):
    """Return ``x`` as a finite float64 vector of length 12."""
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape != (12,):
        raise InputError(f"parameter vector must have 12 entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InputError("parameter vector contains non-finite entries")
    return arr


def check_matched(U, Y):
    U = check_postures(U, name="inputs")
    Y = check_postures(Y, name="outputs")
    if U.shape[0] != Y.shape[0]:
        raise InputError(f"length mismatch: {U.shape[0]} inputs vs {Y.shape[0]} outputs")
    return U, Y


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InputError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InputError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_random_state(seed):
    """Coerce ``seed`` into a :class:`numpy.random.Generator`."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise InputError(f"cannot build a random generator from {seed!r}")

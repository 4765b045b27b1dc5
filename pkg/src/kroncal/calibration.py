"""Linear input/output calibration of a 3-axis plant.

The plant maps commanded postures ``u = (pitch, yaw, roll)`` to measured
postures through ``y = X_A u + X_B``.  Stacking the rows of ``X_A`` and the
bias ``X_B`` gives a 12-entry parameter vector

    x = [a11, a12, a13, a21, a22, a23, a31, a32, a33, b_x, b_y, b_z]

and each posture contributes a 3x12 block ``[I3 (x) u^T | I3]`` to a linear
regression ``y = A x``.  Four postures in general position are enough to
make ``A`` full rank.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matched, check_parameters, check_postures
from .exceptions import IdentifiabilityError, InputError, InversionError

N_PARAMS = 12
AXES = ("pitch", "yaw", "roll")
RANK_TOL = 1e-10
COND_CAP = 1e12


def split_parameters(x):
    """Return ``(X_A, X_B)`` from a 12-entry parameter vector."""
    x = check_parameters(x)
    return x[:9].reshape(3, 3), x[9:].copy()


def join_parameters(x_a, x_b):
    x_a = np.asarray(x_a, dtype=float)
    x_b = np.asarray(x_b, dtype=float).reshape(-1)
    if x_a.shape != (3, 3) or x_b.shape != (3,):
        raise InputError(f"expected a 3x3 scaling matrix and a 3-vector bias, got {x_a.shape} and {x_b.shape}")
    return check_parameters(np.concatenate([x_a.reshape(-1), x_b]))


def row_block(u):
    """Regression block of a single posture, shape (3, 12).

    Row ``r`` holds ``u`` in columns ``3r:3r+3`` and a one in column ``9 + r``.
    """
    u = check_postures(u, name="posture")
    if u.shape[0] != 1:
        raise InputError("row_block takes exactly one posture")
    return assemble_design(u)


def assemble_design(postures):
    """Stack the regression blocks of ``postures`` into a (3N, 12) matrix."""
    U = check_postures(postures)
    n = U.shape[0]
    blocks = np.zeros((n, 3, N_PARAMS))
    for r in range(3):
        blocks[:, r, 3 * r:3 * r + 3] = U
        blocks[:, r, 9 + r] = 1.0
    return blocks.reshape(3 * n, N_PARAMS)


def stack_outputs(outputs):
    """Flatten outputs posture-by-posture into the regression target."""
    return check_postures(outputs, name="outputs").reshape(-1)


def numerical_rank(A, tol=RANK_TOL):
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def condition_number(A):
    """Ratio of extreme singular values of ``A`` (inf when rank deficient)."""
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])


def identify(postures, outputs, *, rank_tol=RANK_TOL):
    """Least-squares estimate of the 12 calibration parameters.

    Solves ``min ||A x - y||`` through a QR factorisation of the design
    matrix rather than the normal equations.

    Parameters
    ----------
    postures, outputs : array-like of shape (N, 3)
        Commanded and measured postures, ``N >= 4``.
    rank_tol : float
        Singular values below ``rank_tol * s_max`` count as zero.

    Returns
    -------
    ndarray of shape (12,)

    Raises
    ------
    IdentifiabilityError
        If the design has numerical rank below 12.
    """
    U, Y = check_matched(postures, outputs)
    A = assemble_design(U)
    rank = numerical_rank(A, rank_tol)
    if rank < N_PARAMS:
        raise IdentifiabilityError(rank)
    q, r = np.linalg.qr(A, mode="reduced")
    return np.linalg.solve(r, q.T @ Y.reshape(-1))


def predict(x, postures):
    """Apply the calibration map ``y = X_A u + X_B``.

    Accepts a single posture (returns shape (3,)) or an (n, 3) array.
    """
    x_a, x_b = split_parameters(x)
    single = np.ndim(postures) == 1
    U = check_postures(postures)
    Y = U @ x_a.T + x_b
    return Y[0] if single else Y


def invert_calibration(x, y_desired, *, cond_cap=COND_CAP):
    """Command that makes the calibrated plant reach ``y_desired``.

    Raises :class:`InversionError` when ``X_A`` has condition number above
    ``cond_cap``.
    """
    x_a, x_b = split_parameters(x)
    single = np.ndim(y_desired) == 1
    Y = check_postures(y_desired, name="desired outputs")
    cond = np.linalg.cond(x_a)
    if not np.isfinite(cond) or cond > cond_cap:
        raise InversionError(cond, cond_cap)
    U = np.linalg.solve(x_a, (Y - x_b).T).T
    return U[0] if single else U


@dataclass(frozen=True)
class AxisErrorStats:
    median: float
    iqr: float
    min: float
    max: float
    median_abs: float


def residual_stats(postures, outputs, x=None):
    """Per-axis distribution of posture errors.

    With ``x=None`` the errors are ``y - u`` (uncalibrated); otherwise they
    are ``y - predict(x, u)``.  Returns a dict keyed by axis name.
    """
    U, Y = check_matched(postures, outputs)
    E = Y - (U if x is None else predict(x, U))
    q1, med, q3 = np.percentile(E, [25, 50, 75], axis=0)
    med_abs = np.median(np.abs(E), axis=0)
    return {
        axis: AxisErrorStats(
            median=float(med[i]),
            iqr=float(q3[i] - q1[i]),
            min=float(E[:, i].min()),
            max=float(E[:, i].max()),
            median_abs=float(med_abs[i]),
        )
        for i, axis in enumerate(AXES)
    }


@dataclass(frozen=True)
class MotorConversion:
    """Pulses per revolution and gear reduction of one motor axis."""

    pulses_per_rev: float
    reduction_ratio: float

    def __post_init__(self):
        for name in ("pulses_per_rev", "reduction_ratio"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InputError(f"{name} must be positive and finite, got {value!r}")

    @property
    def degrees_per_pulse(self):
        return 360.0 / (self.pulses_per_rev * self.reduction_ratio)


def pulse_to_angle(p, conv):
    """Angle in degrees for a signed pulse count ``p``."""
    return 360.0 * np.asarray(p, dtype=float) / (conv.pulses_per_rev * conv.reduction_ratio)


def angle_to_pulse(theta, conv):
    """Nearest signed pulse count for ``theta`` degrees, ties away from zero.

    Returns ``(pulses, residual)`` where ``residual`` is the angle left over
    after quantisation, ``theta - pulse_to_angle(pulses)``.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InputError("angles must be finite")
    exact = theta * (conv.pulses_per_rev * conv.reduction_ratio) / 360.0
    pulses = (np.sign(exact) * np.floor(np.abs(exact) + 0.5)).astype(np.int64)
    residual = theta - pulse_to_angle(pulses, conv)
    if pulses.ndim == 0:
        return int(pulses), float(residual)
    return pulses, residual


class LinearCalibration(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`identify` and :func:`predict`.

    Parameters
    ----------
    rank_tol : float, default=1e-10
        Relative singular-value threshold for the identifiability check.
    cond_cap : float, default=1e12
        Largest admissible condition number of ``X_A`` in
        :meth:`inverse_predict`.

    Attributes
    ----------
    coef_ : ndarray of shape (12,)
        Identified parameters, rows of ``X_A`` followed by ``X_B``.
    scaling_ : ndarray of shape (3, 3)
    bias_ : ndarray of shape (3,)
    condition_number_ : float
        Condition number of the stacked design matrix used in ``fit``.
    """

    def __init__(self, rank_tol=RANK_TOL, cond_cap=COND_CAP):
        self.rank_tol = rank_tol
        self.cond_cap = cond_cap

    def fit(self, X, y):
        U, Y = check_matched(X, y)
        self.coef_ = identify(U, Y, rank_tol=self.rank_tol)
        self.scaling_, self.bias_ = split_parameters(self.coef_)
        self.condition_number_ = condition_number(assemble_design(U))
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return predict(self.coef_, check_postures(X))

    def inverse_predict(self, y):
        """Commands that reproduce the measured postures ``y``."""
        check_is_fitted(self, "coef_")
        return invert_calibration(self.coef_, check_postures(y, name="outputs"), cond_cap=self.cond_cap)

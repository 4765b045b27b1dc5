"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`KroncalError`; the CLI maps the subclasses onto exit codes.
"""


class KroncalError(Exception):
    """Base class for all package errors."""


class InputError(KroncalError, ValueError):
    """Malformed or inconsistent input (shapes, lengths, non-finite values)."""


class IdentifiabilityError(KroncalError, ValueError):
    """The stacked design matrix does not have full column rank."""

    def __init__(self, rank, n_params=12, message=None):
        self.rank = int(rank)
        self.n_params = int(n_params)
        super().__init__(
            message
            or f"design matrix is rank deficient: numerical rank {self.rank} < {self.n_params}"
        )


class InversionError(KroncalError, ValueError):
    """The scaling matrix of a calibration is singular or ill-conditioned."""

    def __init__(self, condition, cap):
        self.condition = float(condition)
        self.cap = float(cap)
        super().__init__(
            f"cannot invert calibration: condition number {self.condition:.3e} exceeds cap {self.cap:.3e}"
        )


class EnumerationLimitError(KroncalError, ValueError):
    def __init__(self, count, cap):
        self.count = int(count)
        self.cap = int(cap)
        super().__init__(f"exhaustive search over {self.count} subsets exceeds the cap of {self.cap}")


class MaskedActionError(KroncalError, ValueError):
    """An environment step was attempted on an already-selected candidate."""


class NonFiniteLossError(KroncalError, FloatingPointError):
    def __init__(self, update_index, details):
        self.update_index = update_index
        self.details = details
        super().__init__(f"non-finite PPO loss in update {update_index}: {details}")


class DatasetError(KroncalError, IOError):
    """Dataset or report file could not be read or written."""

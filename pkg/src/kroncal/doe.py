"""D-optimal selection of calibration postures.

The informativeness of a posture subset is the log-determinant of its
information matrix ``S = A^T A``.  Subsets whose ``S`` is not positive
definite (fewer than four postures in general position) score the floor
value ``LOGDET_FLOOR``.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_postures, check_random_state
from .calibration import N_PARAMS, assemble_design
from .exceptions import EnumerationLimitError, InputError

LOGDET_FLOOR = -50.0
REGULARIZER = 1e-9
ENUMERATION_CAP = 10**6
MAX_EXCHANGE_PASSES = 50
# ties within this relative distance of the best screened value are re-scored exactly
_SCREEN_WINDOW = 1e-9
_CHUNK = 20000


@dataclass(frozen=True)
class SubsetSelection:
    """K candidate indices, sorted ascending, with their log-det objective."""

    indices: tuple
    objective: float
    singular: bool = False

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise InputError(f"selection indices must be unique, got {idx}")
        if any(i < 0 for i in idx):
            raise InputError(f"selection indices must be non-negative, got {idx}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    @property
    def k(self):
        return len(self.indices)

    @property
    def det(self):
        """``det(S)``, or 0 for a floored (singular) subset."""
        return 0.0 if self.singular else math.exp(self.objective)


def information_matrix(postures):
    A = assemble_design(postures)
    return A.T @ A


def log_det_objective(S, *, floor=LOGDET_FLOOR, return_flag=False):
    """``ln det(S)`` through a Cholesky factorisation, floored at ``floor``.

    When ``S`` is not numerically positive definite, or its log-determinant
    falls below ``floor``, the floor is returned and the singular flag set.
    """
    S = np.asarray(S, dtype=float)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        value, singular = float(floor), True
    else:
        value = float(2.0 * np.sum(np.log(np.diag(L))))
        singular = not np.isfinite(value) or value < floor
        if singular:
            value = float(floor)
    return (value, singular) if return_flag else value


def _factor_log_det(A, floor):
    # the R factor of A is the Cholesky factor of A^T A, obtained without
    # forming the product (whose rounding would cost a factor cond(A))
    if A.shape[0] < A.shape[1]:
        return float(floor), True
    with np.errstate(divide="ignore"):
        value = float(2.0 * np.sum(np.log(np.abs(np.diag(np.linalg.qr(A, mode="r"))))))
    if not np.isfinite(value) or value < floor:
        return float(floor), True
    return value, False


def design_log_det(postures, *, floor=LOGDET_FLOOR, return_flag=False):
    """``ln det(S)`` of a posture subset, factorising ``S`` through its design matrix.

    Same value and floor semantics as ``log_det_objective(information_matrix(postures))``
    but accurate to working precision even for ill-conditioned subsets.
    """
    U = check_postures(postures)
    # canonical row order so the value depends only on the set of postures
    U = U[np.lexsort(U.T[::-1])]
    value, singular = _factor_log_det(assemble_design(U), floor)
    return (value, singular) if return_flag else value


def subset_objective(candidates, indices, *, floor=LOGDET_FLOOR):
    """Floored log-det objective of ``candidates[indices]``."""
    C = check_postures(candidates, name="candidates")
    idx = np.sort(np.asarray(indices, dtype=int))
    return design_log_det(C[idx], floor=floor)


def make_selection(candidates, indices, *, floor=LOGDET_FLOOR):
    C = check_postures(candidates, name="candidates")
    idx = sorted(int(i) for i in indices)
    if any(i >= len(C) for i in idx):
        raise InputError(f"selection index out of range for {len(C)} candidates: {idx}")
    value, singular = design_log_det(C[idx], floor=floor, return_flag=True)
    return SubsetSelection(tuple(idx), value, singular)


def regularized_log_det(S, eps=REGULARIZER):
    """``ln det(S + eps I)`` without flooring; used to rank partial designs."""
    sign, value = np.linalg.slogdet(np.asarray(S) + eps * np.eye(len(S)))
    return value if sign > 0 else -np.inf


def _check_budget(candidates, k):
    C = check_postures(candidates, name="candidates")
    k = check_positive_int(k, "k", minimum=1)
    if k > len(C):
        raise InputError(f"cannot select {k} of {len(C)} candidates")
    return C, k


def _design_blocks(C):
    """Per-candidate regression blocks, shape (M, 3, 12)."""
    return assemble_design(C).reshape(len(C), 3, N_PARAMS)


def _batch_log_det(blocks, combos, floor):
    A = blocks[combos].reshape(len(combos), -1, N_PARAMS)
    if A.shape[1] == N_PARAMS:
        # square design: det(S) = det(A)^2
        sign, value = np.linalg.slogdet(A)
        value = 2.0 * value
    else:
        sign, value = np.linalg.slogdet(np.einsum("nij,nik->njk", A, A))
    return np.where((sign != 0) & (value >= floor), value, floor)


def exhaustive_select(candidates, k=4, *, cap=ENUMERATION_CAP, floor=LOGDET_FLOOR):
    """Globally D-optimal ``k``-subset by full enumeration.

    Subsets are visited in lexicographic order; among equal objectives the
    lexicographically smallest index tuple wins.  Refuses to run when
    ``C(M, k)`` exceeds ``cap``.
    """
    C, k = _check_budget(candidates, k)
    total = math.comb(len(C), k)
    if total > cap:
        raise EnumerationLimitError(total, cap)
    blocks = _design_blocks(C)
    combo_iter = itertools.combinations(range(len(C)), k)
    best_value = -np.inf
    shortlist = []
    while True:
        chunk = np.fromiter(itertools.chain.from_iterable(itertools.islice(combo_iter, _CHUNK)),
                            dtype=np.int64)
        if chunk.size == 0:
            break
        combos = chunk.reshape(-1, k)
        values = _batch_log_det(blocks, combos, floor)
        chunk_best = values.max()
        if chunk_best > best_value:
            best_value = chunk_best
        cut = best_value - _SCREEN_WINDOW * max(1.0, abs(best_value))
        shortlist = [s for s in shortlist if s[0] >= cut]
        keep = np.nonzero(values >= cut)[0]
        shortlist.extend((values[i], tuple(combos[i])) for i in keep)
    # exact re-scoring of the near-ties with the reference objective
    best = None
    for _, idx in shortlist:
        sel = make_selection(C, idx, floor=floor)
        if best is None or sel.objective > best.objective:
            best = sel
    return best


def greedy_select(candidates, k=4, *, eps=REGULARIZER, floor=LOGDET_FLOOR):
    """Sequentially add the candidate that most increases ``ln det(S + eps I)``."""
    C, k = _check_budget(candidates, k)
    blocks = _design_blocks(C)
    S = np.zeros((N_PARAMS, N_PARAMS))
    chosen = []
    for _ in range(k):
        best_i, best_v = None, -np.inf
        for i in range(len(C)):
            if i in chosen:
                continue
            v = regularized_log_det(S + blocks[i].T @ blocks[i], eps)
            if best_i is None or v > best_v:
                best_i, best_v = i, v
        chosen.append(best_i)
        S = S + blocks[best_i].T @ blocks[best_i]
    return make_selection(C, chosen, floor=floor)


def exchange_improve(candidates, selection, *, max_passes=MAX_EXCHANGE_PASSES, eps=REGULARIZER,
                     floor=LOGDET_FLOOR, history=None):
    """Fedorov-style refinement by best single swaps.

    Each pass evaluates every (out, in) swap and applies the best one if it
    strictly improves the objective.  Swaps are ranked by the floored
    objective first and the regularised log-det second, so floored starts
    can still climb out of the singular plateau.  If ``history`` is a list,
    the objective after every pass is appended to it.
    """
    C = check_postures(candidates, name="candidates")
    if isinstance(selection, SubsetSelection):
        current = list(selection.indices)
    else:
        current = sorted(int(i) for i in selection)
    blocks = _design_blocks(C)

    def key(idx):
        A = blocks[idx].reshape(-1, N_PARAMS)
        return (design_log_det(C[idx], floor=floor), regularized_log_det(A.T @ A, eps))

    current_key = key(current)
    if history is not None:
        history.append(current_key[0])
    for _ in range(max_passes):
        best_key, best_swap = current_key, None
        for pos in range(len(current)):
            for j in range(len(C)):
                if j in current:
                    continue
                trial = current.copy()
                trial[pos] = j
                trial_key = key(trial)
                if trial_key > best_key:
                    best_key, best_swap = trial_key, trial
        if best_swap is None:
            break
        current, current_key = sorted(best_swap), best_key
        if history is not None:
            history.append(current_key[0])
    return make_selection(C, current, floor=floor)


def random_select(candidates, k=4, rng=None, *, floor=LOGDET_FLOOR):
    """Uniform ``k``-subset without replacement."""
    C, k = _check_budget(candidates, k)
    rng = check_random_state(rng)
    idx = rng.choice(len(C), size=k, replace=False)
    return make_selection(C, idx, floor=floor)


STRATEGIES = ("exhaustive", "greedy", "exchange", "random")


class DOptimalSelector(TransformerMixin, BaseEstimator):
    """Pick ``n_select`` rows of a candidate posture set by D-optimality.

    ``fit`` runs the chosen strategy on the candidates; ``transform`` then
    returns the selected rows.

    Parameters
    ----------
    n_select : int, default=4
    strategy : {"exhaustive", "greedy", "exchange", "random"}, default="exhaustive"
        ``"exchange"`` refines a greedy start.
    random_state : int, Generator or None
        Only used by ``"random"``.
    enumeration_cap : int, default=10**6
    """

    def __init__(self, n_select=4, strategy="exhaustive", random_state=None,
                 enumeration_cap=ENUMERATION_CAP):
        self.n_select = n_select
        self.strategy = strategy
        self.random_state = random_state
        self.enumeration_cap = enumeration_cap

    def fit(self, X, y=None):
        C = check_postures(X, name="candidates")
        if self.strategy == "exhaustive":
            sel = exhaustive_select(C, self.n_select, cap=self.enumeration_cap)
        elif self.strategy == "greedy":
            sel = greedy_select(C, self.n_select)
        elif self.strategy == "exchange":
            sel = exchange_improve(C, greedy_select(C, self.n_select))
        elif self.strategy == "random":
            sel = random_select(C, self.n_select, self.random_state)
        else:
            raise InputError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        self.selection_ = sel
        self.indices_ = np.asarray(sel.indices)
        self.objective_ = sel.objective
        self.n_features_in_ = 3
        self.n_candidates_ = len(C)
        return self

    def get_support(self, indices=False):
        check_is_fitted(self, "indices_")
        if indices:
            return self.indices_.copy()
        mask = np.zeros(self.n_candidates_, dtype=bool)
        mask[self.indices_] = True
        return mask

    def transform(self, X):
        check_is_fitted(self, "indices_")
        C = check_postures(X, name="candidates")
        if len(C) != self.n_candidates_:
            raise InputError(f"fitted on {self.n_candidates_} candidates, got {len(C)}")
        return C[self.indices_]

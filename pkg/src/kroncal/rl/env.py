"""Sequential posture-selection environment.

An episode picks ``k_select`` of ``n_candidates`` normalised postures one
at a time.  Intermediate rewards are zero; the terminal reward is the
floored log-det objective of the chosen subset times ``reward_scale``.

Feature layout for M candidates (210 values when M = 50)::

    [poses 3M | availability M | selection stats 6 | progress 1 | matrix 3]

Selection stats are the per-axis mean and population std of the selected
inputs (or outputs, with ``stats_source="outputs"``).  The matrix block is
``[floored ln det(S + eps I) / 100, trace(S) / 12, fraction of singular
values of S above 1e-8]`` for the partial information matrix ``S``.
"""

import numpy as np

from .._validation import check_postures
from ..calibration import N_PARAMS
from ..doe import LOGDET_FLOOR, REGULARIZER, design_log_det, information_matrix, make_selection
from ..exceptions import InputError, MaskedActionError

N_STATS = 6
N_MATRIX = 3
SINGULAR_VALUE_CUTOFF = 1e-8
LOGDET_FEATURE_SCALE = 100.0


def feature_dim(n_candidates):
    return 4 * n_candidates + N_STATS + 1 + N_MATRIX


def matrix_features(S, *, eps=REGULARIZER, floor=LOGDET_FLOOR):
    sign, ld = np.linalg.slogdet(S + eps * np.eye(N_PARAMS))
    ld = ld if sign > 0 else floor
    sv = np.linalg.svd(S, compute_uv=False)
    return np.array([
        max(ld, floor) / LOGDET_FEATURE_SCALE,
        np.trace(S) / N_PARAMS,
        np.count_nonzero(sv > SINGULAR_VALUE_CUTOFF) / N_PARAMS,
    ])


class SelectionEnv:
    """Masked sequential selection over one candidate set.

    Parameters
    ----------
    n_candidates : int, default=50
    k_select : int, default=4
    reward_scale : float, default=0.1
    stats_source : {"inputs", "outputs"}
        Which postures feed the 6 selection statistics.  ``"outputs"``
        needs measured outputs passed to :meth:`reset`.
    """

    def __init__(self, n_candidates=50, k_select=4, *, reward_scale=0.1, eps=REGULARIZER,
                 floor=LOGDET_FLOOR, stats_source="inputs"):
        if stats_source not in ("inputs", "outputs"):
            raise InputError(f"stats_source must be 'inputs' or 'outputs', got {stats_source!r}")
        if not 1 <= k_select <= n_candidates:
            raise InputError(f"need 1 <= k_select <= n_candidates, got {k_select}, {n_candidates}")
        self.n_candidates = n_candidates
        self.k_select = k_select
        self.reward_scale = reward_scale
        self.eps = eps
        self.floor = floor
        self.stats_source = stats_source
        self.candidates = None

    @property
    def feature_dim(self):
        return feature_dim(self.n_candidates)

    @property
    def step_index(self):
        return len(self.selected)

    @property
    def done(self):
        return len(self.selected) == self.k_select

    @property
    def mask(self):
        """Boolean availability, True where a candidate can still be chosen."""
        return self.availability.astype(bool)

    def reset(self, candidates, outputs=None):
        C = check_postures(candidates, name="candidates", normalized=True)
        if len(C) != self.n_candidates:
            raise InputError(f"environment expects {self.n_candidates} candidates, got {len(C)}")
        if self.stats_source == "outputs":
            if outputs is None:
                raise InputError("stats_source='outputs' needs measured outputs")
            outputs = check_postures(outputs, name="outputs")
        self.candidates = C
        self.outputs = outputs
        self.selected = []
        self.availability = np.ones(self.n_candidates)
        self._S = np.zeros((N_PARAMS, N_PARAMS))
        return self.featurize()

    def featurize(self):
        if self.candidates is None:
            raise InputError("call reset() before featurize()")
        stats = np.zeros(N_STATS)
        if self.selected:
            src = self.candidates if self.stats_source == "inputs" else self.outputs
            chosen = src[sorted(self.selected)]
            stats[:3] = chosen.mean(axis=0)
            stats[3:] = chosen.std(axis=0)
        progress = len(self.selected) / self.k_select
        return np.concatenate([
            self.candidates.reshape(-1),
            self.availability,
            stats,
            [progress],
            matrix_features(self._S, eps=self.eps, floor=self.floor),
        ])

    def step(self, action):
        if self.done:
            raise MaskedActionError("episode already finished")
        action = int(action)
        if not 0 <= action < self.n_candidates or self.availability[action] == 0:
            raise MaskedActionError(f"action {action} is not available")
        self.selected.append(action)
        self.availability[action] = 0.0
        self._S = information_matrix(self.candidates[sorted(self.selected)])
        reward = 0.0
        if self.done:
            reward = self.objective() * self.reward_scale
        return self.featurize(), reward, self.done

    def objective(self):
        return design_log_det(self.candidates[sorted(self.selected)], floor=self.floor)

    def selection(self):
        return make_selection(self.candidates, self.selected, floor=self.floor)

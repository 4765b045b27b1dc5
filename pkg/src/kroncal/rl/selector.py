"""Estimator front-end for the learned posture selector."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import check_postures
from ..exceptions import InputError
from .ppo import TrainConfig, evaluate_policy, load_checkpoint, save_checkpoint, train


class PPOSelector(TransformerMixin, BaseEstimator):
    """Learn to pick ``k_select`` informative postures with PPO.

    ``fit`` trains on a lazily generated candidate stream (``X`` is
    ignored).  ``transform`` selects from one candidate set at a time.
    """

    def __init__(self, total_episodes=20000, hidden_dim=128, k_select=4, n_candidates=50,
                 update_every_episodes=16, epochs_per_update=10, clip_ratio=0.2,
                 entropy_coef=0.01, value_coef=0.5, learning_rate=3e-4, random_state=0,
                 mode="greedy"):
        self.total_episodes = total_episodes
        self.hidden_dim = hidden_dim
        self.k_select = k_select
        self.n_candidates = n_candidates
        self.update_every_episodes = update_every_episodes
        self.epochs_per_update = epochs_per_update
        self.clip_ratio = clip_ratio
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.learning_rate = learning_rate
        self.random_state = random_state
        self.mode = mode

    def _config(self):
        return TrainConfig(
            total_episodes=self.total_episodes, hidden_dim=self.hidden_dim, k_select=self.k_select,
            n_candidates=self.n_candidates, update_every_episodes=self.update_every_episodes,
            epochs_per_update=self.epochs_per_update, clip_ratio=self.clip_ratio,
            entropy_coef=self.entropy_coef, value_coef=self.value_coef,
            learning_rate=self.learning_rate, seed=int(self.random_state or 0))

    def fit(self, X=None, y=None, candidate_stream=None):
        result = train(self._config(), candidate_stream)
        self.model_ = result.model
        self.config_ = result.config
        self.rewards_ = result.rewards
        self.n_features_in_ = 3
        return self

    @classmethod
    def from_checkpoint(cls, path, mode="greedy"):
        model, cfg, _ = load_checkpoint(path)
        est = cls(total_episodes=cfg.total_episodes, hidden_dim=cfg.hidden_dim, k_select=cfg.k_select,
                  n_candidates=cfg.n_candidates, random_state=cfg.seed, mode=mode)
        est.model_, est.config_ = model, cfg
        est.n_features_in_ = 3
        return est

    def save(self, path):
        check_is_fitted(self, "model_")
        return save_checkpoint(path, self.model_, self.config_, self.config_.total_episodes)

    def select(self, candidates, seed=0):
        """:class:`~kroncal.doe.SubsetSelection` for one candidate set."""
        check_is_fitted(self, "model_")
        C = check_postures(candidates, name="candidates", normalized=True)
        if len(C) < self.k_select:
            raise InputError(f"need at least {self.k_select} candidates")
        return evaluate_policy(self.model_, [C], self.mode, seed=seed, k_select=self.k_select)["selections"][0]

    def transform(self, X):
        C = check_postures(X, name="candidates", normalized=True)
        return C[np.asarray(self.select(C).indices)]

from .env import SelectionEnv, feature_dim, matrix_features
from .policy import AttentionActorCritic, masked_entropy, policy_forward
from .ppo import (
    DESK_PRESET,
    PAPER_PRESET,
    PRESETS,
    RolloutBuffer,
    TrainConfig,
    TrainResult,
    compute_returns,
    evaluate_policy,
    learning_curve,
    load_checkpoint,
    ppo_loss,
    ppo_update,
    save_checkpoint,
    train,
    write_learning_curve,
)
from .selector import PPOSelector

__all__ = [
    "SelectionEnv", "feature_dim", "matrix_features", "AttentionActorCritic", "masked_entropy",
    "policy_forward", "DESK_PRESET", "PAPER_PRESET", "PRESETS", "RolloutBuffer", "TrainConfig",
    "TrainResult", "compute_returns", "evaluate_policy", "learning_curve", "load_checkpoint",
    "ppo_loss", "ppo_update", "save_checkpoint", "train", "write_learning_curve", "PPOSelector",
]

"""PPO training of the posture-selection policy.

Rollouts run ``update_every_episodes`` environments in lockstep; each
update performs ``epochs_per_update`` full-batch Adam steps on the clipped
surrogate plus value and entropy terms.  Returns are Monte-Carlo with
``discount`` (1.0 by default), so every step of an episode carries the
episode's terminal reward.
"""

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import torch

from ..doe import LOGDET_FLOOR
from ..exceptions import DatasetError, InputError, NonFiniteLossError
from ..simulator import DatasetSpec, generate_candidates
from .env import SelectionEnv
from .policy import AttentionActorCritic, masked_entropy

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "kroncal-policy"
CHECKPOINT_VERSION = 1
# candidate streams for training are keyed away from dataset seeds
TRAIN_STREAM_OFFSET = 7_919


@dataclass(frozen=True)
class TrainConfig:
    total_episodes: int = 20000
    update_every_episodes: int = 16
    epochs_per_update: int = 10
    clip_ratio: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    discount: float = 1.0
    seed: int = 0
    hidden_dim: int = 128
    reward_scale: float = 0.1
    n_candidates: int = 50
    k_select: int = 4
    max_grad_norm: float = 0.5
    activation: str = "tanh"
    stats_source: str = "inputs"

    def __post_init__(self):
        if self.total_episodes < self.update_every_episodes or self.total_episodes % self.update_every_episodes:
            raise InputError(
                f"total_episodes ({self.total_episodes}) must be a positive multiple of "
                f"update_every_episodes ({self.update_every_episodes})")
        if self.epochs_per_update < 1 or self.hidden_dim < 1:
            raise InputError("epochs_per_update and hidden_dim must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


DESK_PRESET = TrainConfig(total_episodes=20000, hidden_dim=128)
PAPER_PRESET = TrainConfig(total_episodes=200000, hidden_dim=768)
PRESETS = {"desk": DESK_PRESET, "paper": PAPER_PRESET}


def default_candidate_stream(cfg):
    spec = DatasetSpec(n_episodes=1, m_per_episode=cfg.n_candidates, seed=cfg.seed + TRAIN_STREAM_OFFSET)
    return lambda episode_id: generate_candidates(spec, episode_id)


@dataclass
class RolloutBuffer:
    """Per-step records of complete episodes, grouped episode-major."""

    k_select: int
    features: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def add(self, features, mask, action, log_prob, value, reward, done):
        self.features.append(np.asarray(features, dtype=float))
        self.masks.append(np.asarray(mask, dtype=bool))
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.values.append(float(value))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))

    def __len__(self):
        return len(self.actions)

    @property
    def n_episodes(self):
        return sum(self.dones)

    def check_complete(self):
        n = len(self)
        if n == 0 or n % self.k_select or not self.dones[-1]:
            raise InputError(f"buffer holds an incomplete episode ({n} steps, k={self.k_select})")
        done = np.asarray(self.dones).reshape(-1, self.k_select)
        if not (np.all(done[:, -1]) and not np.any(done[:, :-1])):
            raise InputError("buffer steps are not grouped into complete episodes")


def compute_returns(buffer, discount=1.0, normalize=True):
    """Discounted returns and (batch-normalised) advantages ``R - V``."""
    buffer.check_complete()
    rewards = np.asarray(buffer.rewards)
    returns = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        if buffer.dones[t]:
            running = 0.0
        running = rewards[t] + discount * running
        returns[t] = running
    adv = returns - np.asarray(buffer.values)
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return returns, adv


def ppo_loss(model, batch, cfg):
    """Total PPO loss and its three terms for a batch of tensors.

    ``batch`` holds ``features, masks, actions, old_log_probs, returns,
    advantages``.
    """
    logp_all, value = model(batch["features"], batch["masks"])
    logp = logp_all.gather(1, batch["actions"][:, None]).squeeze(1)
    ratio = torch.exp(logp - batch["old_log_probs"])
    adv = batch["advantages"]
    clipped = torch.clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
    policy_loss = -torch.min(ratio * adv, clipped * adv).mean()
    value_loss = ((value - batch["returns"]) ** 2).mean()
    entropy = masked_entropy(logp_all, batch["masks"]).mean()
    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    return total, {"policy": policy_loss, "value": value_loss, "entropy": entropy}


def buffer_to_batch(buffer, cfg, dtype=torch.float32):
    returns, adv = compute_returns(buffer, cfg.discount)
    return {
        "features": torch.as_tensor(np.stack(buffer.features), dtype=dtype),
        "masks": torch.as_tensor(np.stack(buffer.masks)),
        "actions": torch.as_tensor(buffer.actions, dtype=torch.long),
        "old_log_probs": torch.as_tensor(buffer.log_probs, dtype=dtype),
        "returns": torch.as_tensor(returns, dtype=dtype),
        "advantages": torch.as_tensor(adv, dtype=dtype),
    }


def ppo_update(model, optimizer, buffer, cfg, update_index=0):
    """Run ``cfg.epochs_per_update`` gradient steps; return mean loss terms."""
    dtype = next(model.parameters()).dtype
    batch = buffer_to_batch(buffer, cfg, dtype)
    diag = {"total": 0.0, "policy": 0.0, "value": 0.0, "entropy": 0.0}
    for _ in range(cfg.epochs_per_update):
        total, parts = ppo_loss(model, batch, cfg)
        if not torch.isfinite(total):
            raise NonFiniteLossError(update_index, {
                "loss": total.item(), **{k: v.item() for k, v in parts.items()},
                "actions": buffer.actions, "rewards": buffer.rewards})
        optimizer.zero_grad()
        total.backward()
        if cfg.max_grad_norm:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
        optimizer.step()
        diag["total"] += total.item() / cfg.epochs_per_update
        for k, v in parts.items():
            diag[k] += v.item() / cfg.epochs_per_update
    return diag


def build_model(cfg, dtype=torch.float32):
    torch.manual_seed(cfg.seed)
    return AttentionActorCritic(cfg.hidden_dim, activation=cfg.activation).to(dtype)


def _run_episodes(model, candidate_sets, envs, *, sample, generator, buffer=None, outputs=None):
    """Roll out one episode per env in lockstep; return the envs' selections."""
    dtype = next(model.parameters()).dtype
    feats = np.stack([env.reset(c, None if outputs is None else outputs[i])
                      for i, (env, c) in enumerate(zip(envs, candidate_sets))])
    rewards = np.zeros(len(envs))
    per_env = [[] for _ in envs]
    for _ in range(envs[0].k_select):
        masks = np.stack([env.mask for env in envs])
        with torch.no_grad():
            logp, value = model(torch.as_tensor(feats, dtype=dtype), torch.as_tensor(masks))
        if sample:
            actions = torch.multinomial(logp.exp(), 1, generator=generator).squeeze(1)
        else:
            actions = logp.argmax(dim=1)
        new_feats = []
        for i, env in enumerate(envs):
            a = int(actions[i])
            f, r, done = env.step(a)
            per_env[i].append((feats[i], masks[i], a, float(logp[i, a]), float(value[i]), r, done))
            rewards[i] += r
            new_feats.append(f)
        feats = np.stack(new_feats)
    if buffer is not None:
        for steps in per_env:
            for rec in steps:
                buffer.add(*rec)
    return [env.selection() for env in envs], rewards


@dataclass
class TrainResult:
    model: AttentionActorCritic
    config: TrainConfig
    episode_ids: np.ndarray
    rewards: np.ndarray
    selections: list
    losses: list

    def learning_curve(self):
        return learning_curve(self.rewards)


def moving_average(x, window):
    x = np.asarray(x, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def learning_curve(rewards):
    r = np.asarray(rewards, dtype=float)
    return {"episode": np.arange(len(r)), "reward": r,
            "moving_avg_100": moving_average(r, 100), "moving_avg_1000": moving_average(r, 1000)}


def train(cfg=DESK_PRESET, candidate_stream=None, *, log_every=0, dtype=torch.float32):
    """Train a policy for the fixed episode budget of ``cfg``.

    ``candidate_stream`` maps an episode id to an (M, 3) normalised
    candidate array; by default candidates are generated on the fly from
    ``cfg.seed``.  No early stopping.
    """
    stream = candidate_stream or default_candidate_stream(cfg)
    model = build_model(cfg, dtype)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    generator = torch.Generator().manual_seed(cfg.seed)
    envs = [SelectionEnv(cfg.n_candidates, cfg.k_select, reward_scale=cfg.reward_scale,
                         stats_source=cfg.stats_source)
            for _ in range(cfg.update_every_episodes)]
    n_updates = cfg.total_episodes // cfg.update_every_episodes
    rewards = np.zeros(cfg.total_episodes)
    selections = []
    losses = []
    for u in range(n_updates):
        ids = range(u * cfg.update_every_episodes, (u + 1) * cfg.update_every_episodes)
        cands = [stream(e) for e in ids]
        buffer = RolloutBuffer(cfg.k_select)
        sels, ep_rewards = _run_episodes(model, cands, envs, sample=True, generator=generator, buffer=buffer)
        rewards[ids.start:ids.stop] = ep_rewards
        selections.extend(sels)
        losses.append(ppo_update(model, optimizer, buffer, cfg, u))
        if log_every and (u + 1) % log_every == 0:
            logger.info("update %d/%d mean reward %.4f", u + 1, n_updates, ep_rewards.mean())
    return TrainResult(model, cfg, np.arange(cfg.total_episodes), rewards, selections, losses)


def evaluate_policy(model, episodes, mode="greedy", *, seed=0, batch_size=64, k_select=4,
                    floor=LOGDET_FLOOR, stats_source="inputs"):
    """Run a frozen policy on candidate sets.

    ``episodes`` is a sequence of (M, 3) arrays or objects with an
    ``inputs`` attribute.  ``mode="greedy"`` takes the argmax action,
    ``"sample"`` draws from the policy.  Returns a dict with the per-episode
    selections, ``det`` and ``logdet`` arrays and their mean/std.
    """
    if mode not in ("greedy", "sample"):
        raise InputError(f"mode must be 'greedy' or 'sample', got {mode!r}")
    cands = [np.asarray(getattr(ep, "inputs", ep), dtype=float) for ep in episodes]
    outs = [getattr(ep, "outputs", None) for ep in episodes]
    if not cands:
        raise InputError("no episodes to evaluate")
    generator = torch.Generator().manual_seed(seed)
    selections = []
    for start in range(0, len(cands), batch_size):
        chunk = cands[start:start + batch_size]
        envs = [SelectionEnv(len(c), k_select, floor=floor, stats_source=stats_source) for c in chunk]
        sels, _ = _run_episodes(model, chunk, envs, sample=(mode == "sample"), generator=generator,
                                outputs=outs[start:start + batch_size] if stats_source == "outputs" else None)
        selections.extend(sels)
    logdet = np.array([s.objective for s in selections])
    det = np.array([s.det for s in selections])
    return {"selections": selections, "det": det, "logdet": logdet,
            "mean_det": float(det.mean()), "std_det": float(det.std()),
            "mean_logdet": float(logdet.mean()), "std_logdet": float(logdet.std())}


def save_checkpoint(path, model, cfg, episodes_trained):
    state = model.state_dict()
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "architecture": model.architecture(),
        "hidden_dim": model.hidden_dim,
        "episodes_trained": int(episodes_trained),
        "seed": cfg.seed,
        "layer_shapes": {k: list(v.shape) for k, v in state.items()},
        "weights": {k: v.detach().cpu().double().reshape(-1).tolist() for k, v in state.items()},
    }
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")), encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path, dtype=torch.float32):
    """Return ``(model, config, meta)`` from a JSON checkpoint."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise DatasetError(f"{path} is not a version-{CHECKPOINT_VERSION} policy checkpoint")
    cfg = TrainConfig.from_dict(payload["config"])
    arch = payload["architecture"]
    model = AttentionActorCritic(arch["hidden_dim"], arch["attention_dim"], arch["critic_dim"],
                                 arch["activation"]).to(dtype)
    state = {k: torch.tensor(v, dtype=dtype).reshape(payload["layer_shapes"][k])
             for k, v in payload["weights"].items()}
    model.load_state_dict(state)
    meta = {k: payload[k] for k in ("config_digest", "episodes_trained", "seed", "hidden_dim")}
    return model, cfg, meta


def write_learning_curve(path, rewards):
    curve = learning_curve(rewards)
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "reward", "moving_avg_100", "moving_avg_1000"])
            for i in range(len(curve["reward"])):
                w.writerow([i] + [repr(float(curve[k][i])) for k in ("reward", "moving_avg_100", "moving_avg_1000")])
    except OSError as exc:
        raise DatasetError(f"cannot write learning curve {path}: {exc}") from exc
    return path


def config_with(cfg, **overrides):
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})

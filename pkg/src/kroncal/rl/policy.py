"""Attention-scored actor-critic over a variable number of candidates."""

import math

import torch
from torch import nn

from ..exceptions import InputError
from .env import N_MATRIX, N_STATS

_ACTIVATIONS = {"tanh": nn.Tanh, "relu": nn.ReLU, "gelu": nn.GELU}


def _mlp(n_in, hidden, activation):
    act = _ACTIVATIONS[activation]
    return nn.Sequential(nn.Linear(n_in, hidden), act(), nn.Linear(hidden, hidden), act())


class AttentionActorCritic(nn.Module):
    """Shared candidate/context encoders with an attention actor and a value head.

    Each candidate's (pitch, yaw, roll, available) is embedded by the same
    two-layer encoder.  A context encoder embeds the selection statistics,
    progress and matrix features together with the mean embedding of the
    already-selected candidates.  The actor scores candidates by scaled dot
    product between a context query and per-candidate keys; unavailable
    candidates get ``-inf`` before the softmax.  The critic reads the context
    and the mean embedding of all candidates, so the value is invariant to
    candidate order.
    """

    def __init__(self, hidden_dim=128, attention_dim=None, critic_dim=None, activation="tanh"):
        super().__init__()
        if activation not in _ACTIVATIONS:
            raise InputError(f"unknown activation {activation!r}")
        self.hidden_dim = hidden_dim
        self.attention_dim = attention_dim or max(hidden_dim // 4, 1)
        self.critic_dim = critic_dim or max(hidden_dim // 2, 1)
        self.activation = activation
        n_ctx = N_STATS + 1 + N_MATRIX
        self.candidate_encoder = _mlp(4, hidden_dim, activation)
        self.context_encoder = _mlp(n_ctx + hidden_dim, hidden_dim, activation)
        self.query = nn.Linear(hidden_dim, self.attention_dim)
        self.key = nn.Linear(hidden_dim, self.attention_dim)
        self.critic = nn.Sequential(
            nn.Linear(2 * hidden_dim, self.critic_dim),
            _ACTIVATIONS[activation](),
            nn.Linear(self.critic_dim, 1),
        )

    def architecture(self):
        return {"hidden_dim": self.hidden_dim, "attention_dim": self.attention_dim,
                "critic_dim": self.critic_dim, "activation": self.activation}

    def shared_modules(self):
        return [self.candidate_encoder, self.context_encoder]

    def parameter_counts(self):
        count = lambda mods: sum(p.numel() for m in mods for p in m.parameters())
        shared = count(self.shared_modules())
        actor = count([self.query, self.key])
        critic = count([self.critic])
        return {"shared": shared, "actor": actor, "critic": critic, "total": shared + actor + critic}

    def zero_output_layers(self):
        """Zero the query and value output layers (uniform policy, zero value)."""
        with torch.no_grad():
            for layer in (self.query, self.critic[-1]):
                layer.weight.zero_()
                layer.bias.zero_()
        return self

    def forward(self, features, mask):
        """Return ``(log_probs, value)`` for a batch.

        ``features`` has shape (B, 4M + 10) and ``mask`` (B, M), True where a
        candidate is available.
        """
        if features.dim() == 1:
            features, mask = features[None], mask[None]
            logp, value = self.forward(features, mask)
            return logp[0], value[0]
        mask = mask.to(torch.bool)
        if not torch.all(mask.any(dim=1)):
            raise InputError("every row of the mask needs at least one available action")
        B, M = mask.shape
        poses = features[:, :3 * M].reshape(B, M, 3)
        avail = features[:, 3 * M:4 * M]
        ctx_raw = features[:, 4 * M:]
        emb = self.candidate_encoder(torch.cat([poses, avail[..., None]], dim=-1))
        taken = (1.0 - avail)[..., None]
        n_taken = taken.sum(dim=1).clamp(min=1.0)
        sel_mean = (emb * taken).sum(dim=1) / n_taken
        ctx = self.context_encoder(torch.cat([ctx_raw, sel_mean], dim=-1))
        q = self.query(ctx)
        k = self.key(emb)
        scores = torch.einsum("bd,bmd->bm", q, k) / math.sqrt(self.attention_dim)
        scores = scores.masked_fill(~mask, float("-inf"))
        logp = torch.log_softmax(scores, dim=-1)
        value = self.critic(torch.cat([ctx, emb.mean(dim=1)], dim=-1)).squeeze(-1)
        return logp, value


def masked_entropy(logp, mask):
    p = logp.exp()
    return -(p * logp.masked_fill(~mask.to(torch.bool), 0.0)).sum(dim=-1)


def policy_forward(model, features, mask):
    """Action probabilities and state value for one state (numpy in, numpy out)."""
    feats = torch.as_tensor(features, dtype=next(model.parameters()).dtype)
    m = torch.as_tensor(mask, dtype=torch.bool)
    with torch.no_grad():
        logp, value = model(feats, m)
    return logp.exp().numpy(), value.numpy()

"""Clipped-surrogate policy optimization with generalized advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .networks import Critic, TeacherPolicy


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter becomes non-finite."""


@dataclass
class PPOSettings:
    learning_rate: float = 5.0e-4
    lr_decay: float = 0.9999
    discount: float = 0.996
    epochs: int = 2
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    entropy_coef: float = 0.005
    minibatch_size: int = 8300
    value_coef: float = 0.5
    max_grad_norm: float = 1.0


def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over a (T, N) rollout.

    ``values`` has shape (T+1, N): the bootstrap value of the state after
    the last step is appended. ``dones`` marks steps whose successor
    state starts a new episode; credit never flows across them.
    Returns (advantages, value targets), both (T, N).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    T, n = rewards.shape
    adv = np.zeros((T, n))
    last = np.zeros(n)
    for t in range(T - 1, -1, -1):
        not_done = ~dones[t]
        delta = rewards[t] + gamma * values[t + 1] * not_done - values[t]
        last = delta + gamma * lam * not_done * last
        adv[t] = last
    return adv, adv + values[:-1]


def clipped_surrogate(ratio: torch.Tensor, advantage: torch.Tensor, clip: float) -> torch.Tensor:
    """Per-sample pessimistic surrogate (to be maximized)."""
    return torch.minimum(ratio * advantage, torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage)


def gaussian_log_prob(mean: torch.Tensor, log_std: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
    var = torch.exp(2.0 * log_std)
    return (-0.5 * (action - mean) ** 2 / var - log_std - 0.5 * np.log(2.0 * np.pi)).sum(-1)


def gaussian_log_prob_np(mean: np.ndarray, log_std: np.ndarray, action: np.ndarray) -> np.ndarray:
    var = np.exp(2.0 * log_std)
    return (-0.5 * (action - mean) ** 2 / var - log_std - 0.5 * np.log(2.0 * np.pi)).sum(-1)


class PPOTrainer:
    """Owns the optimizer state for one teacher policy + critic pair."""

    def __init__(self, policy: TeacherPolicy, critic: Critic, settings: PPOSettings):
        self.policy = policy
        self.critic = critic
        self.settings = settings
        params = list(policy.parameters()) + list(critic.parameters())
        self.optimizer = torch.optim.Adam(params, lr=settings.learning_rate)
        self.scheduler = torch.optim.lr_scheduler.ExponentialLR(self.optimizer, gamma=settings.lr_decay)

    @property
    def learning_rate(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def update(self, batch: dict[str, np.ndarray], shuffle_rng: np.random.Generator,
               minibatch_size: int | None = None) -> dict[str, float]:
        """Run the configured epochs of minibatch updates over one rollout."""
        s = self.settings
        flat = {
            k: torch.as_tensor(np.asarray(v).reshape(-1, *np.asarray(v).shape[2:]), dtype=torch.float32)
            for k, v in batch.items()
        }
        m = flat["actions"].shape[0]
        mb = min(minibatch_size or s.minibatch_size, m)
        stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
        updates = 0
        for _ in range(s.epochs):
            order = shuffle_rng.permutation(m)
            for start in range(0, m, mb):
                idx = torch.as_tensor(order[start:start + mb])
                proprio = flat["proprio"][idx]
                extero = flat["extero"][idx]
                priv = flat["privileged"][idx]
                actions = flat["actions"][idx]
                old_logp = flat["log_probs"][idx]
                adv = flat["advantages"][idx]
                ret = flat["returns"][idx]
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)

                mean, _, _ = self.policy(proprio, extero, priv)
                logp = gaussian_log_prob(mean, self.policy.log_std, actions)
                ratio = torch.exp(logp - old_logp)
                policy_loss = -clipped_surrogate(ratio, adv, s.clip_ratio).mean()
                value = self.critic(proprio, extero, priv)
                value_loss = torch.mean((value - ret) ** 2)
                entropy = (self.policy.log_std + 0.5 * np.log(2.0 * np.pi * np.e)).sum()
                loss = policy_loss + s.value_coef * value_loss - s.entropy_coef * entropy

                if not torch.isfinite(loss):
                    raise TrainingDiverged(f"non-finite PPO loss: {loss.item()!r}")
                self.optimizer.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(
                    [p for g in self.optimizer.param_groups for p in g["params"]], s.max_grad_norm
                )
                self.optimizer.step()
                self.scheduler.step()
                stats["policy_loss"] += float(policy_loss.item())
                stats["value_loss"] += float(value_loss.item())
                stats["entropy"] += float(entropy.item())
                updates += 1
        return {k: v / max(updates, 1) for k, v in stats.items()} | {"lr": self.learning_rate}

    def state_dict(self) -> dict:
        return {
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict(),
        }

    def load_state_dict(self, d: dict) -> None:
        self.optimizer.load_state_dict(d["optimizer"])
        self.scheduler.load_state_dict(d["scheduler"])

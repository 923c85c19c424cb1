"""Teacher and student function approximators.

The teacher is a feedforward policy over (proprioception, height-sample
latent, privileged latent). The student replaces the two ground-truth
latents with a 120-dim belief state produced by a two-layer GRU whose
output feeds a gate head and a belief head; a sigmoid gate modulates how
much of the current exteroceptive latent is injected into the belief via
a zero-padded skip connection. A decoder with its own gate reconstructs
the clean height samples and the privileged state for the reconstruction
loss and for introspection. The student's action head shares the teacher
head's architecture so teacher weights can initialize it directly.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .kinematics import NUM_LEGS
from .perception import EXTERO_DIM, PROPRIO_DIM, SAMPLES_PER_FOOT
from .simulation import PRIVILEGED_DIM

ACTION_DIM = 16
FOOT_LATENT = 24
EXTERO_LATENT = NUM_LEGS * FOOT_LATENT  # 96
PRIV_LATENT = 24
BELIEF_DIM = EXTERO_LATENT + PRIV_LATENT  # 120
GRU_HIDDEN = 50
GRU_LAYERS = 2
INITIAL_LOG_STD = float(np.log(0.3))


def mlp(sizes: list[int], out_dim: int, negative_slope: float = 0.01) -> nn.Sequential:
    layers: list[nn.Module] = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        layers += [nn.Linear(a, b), nn.LeakyReLU(negative_slope)]
    layers.append(nn.Linear(sizes[-1], out_dim))
    return nn.Sequential(*layers)


class FootEncoder(nn.Module):
    """Height-sample encoder, applied to each foot's block with shared weights."""

    def __init__(self):
        super().__init__()
        self.net = mlp([SAMPLES_PER_FOOT, 80, 60], FOOT_LATENT)

    def forward(self, extero: torch.Tensor) -> torch.Tensor:
        shape = extero.shape[:-1]
        per_foot = extero.reshape(*shape, NUM_LEGS, SAMPLES_PER_FOOT)
        latent = self.net(per_foot)
        return latent.reshape(*shape, EXTERO_LATENT)


class TeacherPolicy(nn.Module):
    """Gaussian policy with exteroceptive and privileged encoders."""

    def __init__(self):
        super().__init__()
        self.extero_encoder = FootEncoder()
        self.priv_encoder = mlp([PRIVILEGED_DIM, 64, 32], PRIV_LATENT)
        self.head = mlp([PROPRIO_DIM + BELIEF_DIM, 256, 160, 128], ACTION_DIM)
        self.log_std = nn.Parameter(torch.full((ACTION_DIM,), INITIAL_LOG_STD))

    def forward(self, proprio: torch.Tensor, extero: torch.Tensor, privileged: torch.Tensor):
        l_e = self.extero_encoder(extero)
        l_priv = self.priv_encoder(privileged)
        mean = self.head(torch.cat([proprio, l_e, l_priv], dim=-1))
        return mean, l_e, l_priv

    def act_mean(self, proprio: torch.Tensor, extero: torch.Tensor, privileged: torch.Tensor) -> torch.Tensor:
        return self.forward(proprio, extero, privileged)[0]


class Critic(nn.Module):
    """Value function over the full teacher observation."""

    def __init__(self):
        super().__init__()
        self.net = mlp([PROPRIO_DIM + EXTERO_DIM + PRIVILEGED_DIM, 256, 160, 128], 1)

    def forward(self, proprio, extero, privileged) -> torch.Tensor:
        return self.net(torch.cat([proprio, extero, privileged], dim=-1)).squeeze(-1)


class BeliefEncoder(nn.Module):
    """Recurrent fusion of proprioception and the noisy exteroceptive latent."""

    def __init__(self, gated: bool = True):
        super().__init__()
        self.gated = gated
        self.rnn = nn.GRU(PROPRIO_DIM + EXTERO_LATENT, GRU_HIDDEN, num_layers=GRU_LAYERS)
        self.gate_head = mlp([GRU_HIDDEN, 64, 64], EXTERO_LATENT)
        self.belief_head = mlp([GRU_HIDDEN, 64, 64], BELIEF_DIM)

    def initial_hidden(self, batch: int, **factory_kwargs) -> torch.Tensor:
        p = next(self.parameters())
        return torch.zeros(GRU_LAYERS, batch, GRU_HIDDEN, dtype=p.dtype, device=p.device, **factory_kwargs)

    def compose_belief(self, b_raw: torch.Tensor, l_e: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
        """b = g_b(b') + zero-padded gated skip of the exteroceptive latent."""
        belief = self.belief_head(b_raw)
        if self.gated:
            pad = torch.zeros(*l_e.shape[:-1], BELIEF_DIM - EXTERO_LATENT, dtype=l_e.dtype, device=l_e.device)
            belief = belief + torch.cat([l_e * alpha, pad], dim=-1)
        return belief

    def forward(self, proprio: torch.Tensor, l_e: torch.Tensor, hidden: torch.Tensor):
        """Sequence forward: proprio/l_e are (T, B, F); hidden is (layers, B, H).

        Returns (belief (T,B,120), b_raw (T,B,50), alpha (T,B,96), hidden').
        """
        b_raw, hidden = self.rnn(torch.cat([proprio, l_e], dim=-1), hidden)
        alpha = torch.sigmoid(self.gate_head(b_raw))
        belief = self.compose_belief(b_raw, l_e, alpha)
        return belief, b_raw, alpha, hidden


class BeliefDecoder(nn.Module):
    """Reconstructs clean height samples and the privileged state from the belief."""

    def __init__(self, gated: bool = True):
        super().__init__()
        self.gated = gated
        self.gate_head = mlp([GRU_HIDDEN, 64, 64], EXTERO_LATENT)
        self.extero_head = mlp([BELIEF_DIM, 64, 64], EXTERO_DIM)
        self.priv_head = mlp([BELIEF_DIM, 64, 64], PRIVILEGED_DIM)
        self.skip = nn.Linear(EXTERO_LATENT, EXTERO_DIM)

    def forward(self, b_raw: torch.Tensor, belief: torch.Tensor, l_e: torch.Tensor):
        extero_hat = self.extero_head(belief)
        if self.gated:
            alpha_r = torch.sigmoid(self.gate_head(b_raw))
            extero_hat = extero_hat + self.skip(l_e * alpha_r)
        priv_hat = self.priv_head(belief)
        return extero_hat, priv_hat


class StudentPolicy(nn.Module):
    """Belief-state policy; consumes proprioception and noisy height samples only."""

    def __init__(self, gated: bool = True):
        super().__init__()
        self.gated = gated
        self.extero_encoder = FootEncoder()
        self.encoder = BeliefEncoder(gated=gated)
        self.decoder = BeliefDecoder(gated=gated)
        self.head = mlp([PROPRIO_DIM + BELIEF_DIM, 256, 160, 128], ACTION_DIM)

    def initial_hidden(self, batch: int) -> torch.Tensor:
        return self.encoder.initial_hidden(batch)

    def init_from_teacher(self, teacher: TeacherPolicy) -> None:
        """Copy the action head and height-sample encoder from a trained teacher."""
        self.head.load_state_dict(teacher.head.state_dict())
        self.extero_encoder.load_state_dict(teacher.extero_encoder.state_dict())

    def forward(self, proprio: torch.Tensor, extero_noisy: torch.Tensor, hidden: torch.Tensor):
        """Sequence forward over (T, B, F) inputs.

        Returns (action mean, belief, b_raw, alpha, extero_hat, priv_hat, hidden').
        """
        l_e = self.extero_encoder(extero_noisy)
        belief, b_raw, alpha, hidden = self.encoder(proprio, l_e, hidden)
        extero_hat, priv_hat = self.decoder(b_raw, belief, l_e)
        action = self.head(torch.cat([proprio, belief], dim=-1))
        return action, belief, b_raw, alpha, extero_hat, priv_hat, hidden

    def act(self, proprio: torch.Tensor, extero_noisy: torch.Tensor, hidden: torch.Tensor):
        """Single-step forward over (B, F) inputs; returns (mean, belief, hidden')."""
        action, belief, _, _, _, _, hidden = self.forward(
            proprio.unsqueeze(0), extero_noisy.unsqueeze(0), hidden
        )
        return action.squeeze(0), belief.squeeze(0), hidden


def student_action_from_belief(student: StudentPolicy, proprio: torch.Tensor, belief: torch.Tensor) -> torch.Tensor:
    """Action head applied to an externally supplied belief vector."""
    return student.head(torch.cat([proprio, belief], dim=-1))


def parameter_fingerprint(module: nn.Module) -> float:
    """Cheap content hash used by frozen-evaluation checks."""
    with torch.no_grad():
        return float(sum(p.double().abs().sum().item() for p in module.parameters()))

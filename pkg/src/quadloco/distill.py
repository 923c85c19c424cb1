"""Student distillation: on-policy rollouts, behavior cloning + reconstruction loss,
and truncated backpropagation through time."""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, echo_config, to_dict
from .curriculum import student_schedule
from .envpool import EnvPool
from .metrics import MetricsWriter
from .networks import GRU_HIDDEN, GRU_LAYERS, StudentPolicy, TeacherPolicy
from .perception import ObservationNormalizer
from .ppo import TrainingDiverged
from .teacher import load_teacher_policy
from .seeding import STREAM_SHUFFLE, rng_stream

METRIC_COLUMNS = [
    "epoch", "loss_bc", "loss_re", "loss_total", "c_sk", "terrain_mode",
    "terminations", "reward_mean",
]


class TeacherOracle:
    """Teacher action means on raw observation bundles, using the teacher's
    own frozen normalization statistics."""

    def __init__(self, policy: TeacherPolicy, normalizer: ObservationNormalizer):
        self.policy = policy
        self.normalizer = normalizer
        self.policy.eval()

    def __call__(self, bundle) -> np.ndarray:
        po = self.normalizer.proprio.normalize(bundle.proprio).astype(np.float32)
        ex = self.normalizer.extero.normalize(bundle.extero_clean).astype(np.float32)
        pv = self.normalizer.privileged.normalize(bundle.privileged).astype(np.float32)
        with torch.no_grad():
            mean, _, _ = self.policy(torch.from_numpy(po), torch.from_numpy(ex), torch.from_numpy(pv))
        return mean.numpy().astype(np.float64)


def run_student_sequence(
    student: StudentPolicy,
    proprio: torch.Tensor,
    extero_noisy: torch.Tensor,
    reset_before: torch.Tensor,
    hidden: torch.Tensor,
):
    """Stepwise student forward over (T, B, F) tensors.

    ``reset_before[t]`` zeroes an environment's hidden state before step t
    is consumed (episode boundaries). Returns stacked per-step outputs and
    the final hidden state, all attached to the autograd graph.
    """
    T = proprio.shape[0]
    actions, beliefs, extero_hats, priv_hats, alphas = [], [], [], [], []
    for t in range(T):
        keep = (~reset_before[t]).to(hidden.dtype).unsqueeze(-1)
        hidden = hidden * keep.unsqueeze(0)
        action, belief, b_raw, alpha, extero_hat, priv_hat, hidden = student(
            proprio[t:t + 1], extero_noisy[t:t + 1], hidden
        )
        actions.append(action[0])
        beliefs.append(belief[0])
        alphas.append(alpha[0])
        extero_hats.append(extero_hat[0])
        priv_hats.append(priv_hat[0])
    return {
        "actions": torch.stack(actions),
        "beliefs": torch.stack(beliefs),
        "alphas": torch.stack(alphas),
        "extero_hat": torch.stack(extero_hats),
        "priv_hat": torch.stack(priv_hats),
        "hidden": hidden,
    }


def per_step_losses(out: dict, teacher_actions: torch.Tensor, extero_clean: torch.Tensor,
                    privileged: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(L_bc, L_re) per step: mean squared action gap and mean squared
    reconstruction error over the concatenated (height samples, privileged) target."""
    l_bc = ((out["actions"] - teacher_actions) ** 2).mean(dim=(1, 2))
    recon = torch.cat([out["extero_hat"], out["priv_hat"]], dim=-1)
    target = torch.cat([extero_clean, privileged], dim=-1)
    l_re = ((recon - target) ** 2).mean(dim=(1, 2))
    return l_bc, l_re


def collect_student_rollout(
    pool: EnvPool,
    student: StudentPolicy,
    teacher_fn,
    normalizer: ObservationNormalizer,
    bundle,
    hidden: torch.Tensor,
    carry_reset: np.ndarray,
    horizon: int,
):
    """Roll the student policy (deterministic mean) and record distillation targets."""
    n = pool.num_envs
    batch = {
        "proprio": np.zeros((horizon, n, bundle.proprio.shape[1]), dtype=np.float32),
        "extero_noisy": np.zeros((horizon, n, bundle.extero_noisy.shape[1]), dtype=np.float32),
        "extero_clean": np.zeros((horizon, n, bundle.extero_clean.shape[1]), dtype=np.float32),
        "privileged": np.zeros((horizon, n, bundle.privileged.shape[1]), dtype=np.float32),
        "teacher_actions": np.zeros((horizon, n, 16), dtype=np.float32),
        "reset_before": np.zeros((horizon, n), dtype=bool),
    }
    h0 = hidden.detach().clone()
    terminations = 0
    reward_total = 0.0
    student.eval()
    for t in range(horizon):
        batch["reset_before"][t] = carry_reset
        keep = torch.from_numpy(~carry_reset).to(hidden.dtype).unsqueeze(-1)
        hidden = hidden * keep.unsqueeze(0)

        normalizer.proprio.update(bundle.proprio)
        normalizer.extero.update(bundle.extero_noisy)
        normalizer.privileged.update(bundle.privileged)
        po = normalizer.proprio.normalize(bundle.proprio).astype(np.float32)
        exn = normalizer.extero.normalize(bundle.extero_noisy).astype(np.float32)
        exc = normalizer.extero.normalize(bundle.extero_clean).astype(np.float32)
        pv = normalizer.privileged.normalize(bundle.privileged).astype(np.float32)

        batch["proprio"][t] = po
        batch["extero_noisy"][t] = exn
        batch["extero_clean"][t] = exc
        batch["privileged"][t] = pv
        batch["teacher_actions"][t] = teacher_fn(bundle)

        with torch.no_grad():
            action, _, hidden = student.act(torch.from_numpy(po), torch.from_numpy(exn), hidden)
        bundle, breakdown, dones, info = pool.step(action.numpy().astype(np.float64))
        carry_reset = dones.copy()
        terminations += int(info["terminated"].sum())
        reward_total += float(breakdown.total.mean())
    stats = {"terminations": terminations, "reward_mean": reward_total / horizon}
    return batch, bundle, hidden.detach(), carry_reset, h0, stats


def tbptt_update(
    student: StudentPolicy,
    optimizer: torch.optim.Optimizer,
    batch: dict,
    h0: torch.Tensor,
    tbptt_steps: int,
    update_epochs: int,
    recon_weight: float,
    max_grad_norm: float = 1.0,
) -> dict:
    """Optimize the distillation loss over one rollout with gradient truncation."""
    student.train()
    T = batch["proprio"].shape[0]
    tensors = {
        k: torch.from_numpy(v) if v.dtype != bool else torch.from_numpy(v)
        for k, v in batch.items()
    }
    totals = {"loss_bc": 0.0, "loss_re": 0.0, "loss_total": 0.0}
    steps = 0
    for _ in range(update_epochs):
        hidden = h0.detach().clone()
        for start in range(0, T, tbptt_steps):
            end = min(T, start + tbptt_steps)
            out = run_student_sequence(
                student,
                tensors["proprio"][start:end],
                tensors["extero_noisy"][start:end],
                tensors["reset_before"][start:end],
                hidden,
            )
            l_bc, l_re = per_step_losses(
                out,
                tensors["teacher_actions"][start:end],
                tensors["extero_clean"][start:end],
                tensors["privileged"][start:end],
            )
            loss = (l_bc + recon_weight * l_re).mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite distillation loss: {loss.item()!r}")
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(student.parameters(), max_grad_norm)
            optimizer.step()
            hidden = out["hidden"].detach()
            totals["loss_bc"] += float(l_bc.mean().item()) * (end - start)
            totals["loss_re"] += float(l_re.mean().item()) * (end - start)
            totals["loss_total"] += float(loss.item()) * (end - start)
            steps += end - start
    return {k: v / steps for k, v in totals.items()}


def student_checkpoint_payload(student, optimizer, normalizer, pool, epoch, cfg,
                               hidden, carry_reset, gated) -> dict:
    return {
        "kind": "student",
        "epoch": epoch,
        "gated": gated,
        "student": student.state_dict(),
        "optimizer": optimizer.state_dict(),
        "normalizer": normalizer.state_dict(),
        "pool": pool.state_dict(),
        "hidden": hidden.detach().numpy(),
        "carry_reset": carry_reset.copy(),
        "config": to_dict(cfg),
        "torch_rng": torch.get_rng_state(),
    }


def load_student_policy(path: str | Path) -> tuple[StudentPolicy, ObservationNormalizer, dict]:
    payload = load_checkpoint(path)
    if payload.get("kind") != "student":
        raise ValueError(f"{path}: not a student checkpoint")
    student = StudentPolicy(gated=payload["gated"])
    student.load_state_dict(payload["student"])
    student.eval()
    normalizer = ObservationNormalizer()
    normalizer.load_state_dict(payload["normalizer"])
    normalizer.freeze()
    return student, normalizer, payload


def distill_student(
    teacher,
    cfg: ExperimentConfig,
    out_dir: str | Path,
    seed: int | None = None,
    epochs: int | None = None,
    gated: bool | None = None,
    teacher_normalizer: ObservationNormalizer | None = None,
) -> dict:
    """Distill a teacher into a recurrent student.

    ``teacher`` is a teacher checkpoint path, a TeacherPolicy (with
    ``teacher_normalizer``), or any callable mapping an observation bundle
    to (n, 16) action means. Samples come from rolling out the student
    itself; the teacher is queried on the same states with clean height
    samples and privileged information.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    epochs = cfg.student.epochs if epochs is None else epochs
    gated = cfg.student.gated if gated is None else gated
    echo_config(cfg, out)

    torch.manual_seed(seed + 1)
    student = StudentPolicy(gated=gated)
    normalizer = ObservationNormalizer()
    teacher_policy = None
    if isinstance(teacher, (str, Path)):
        teacher_policy, teacher_norm, _ = load_teacher_policy(teacher)
        teacher_fn = TeacherOracle(teacher_policy, teacher_norm)
        normalizer.load_state_dict(teacher_norm.state_dict())
        normalizer.freeze(False)
    elif isinstance(teacher, TeacherPolicy):
        if teacher_normalizer is None:
            raise ValueError("teacher_normalizer is required with a TeacherPolicy instance")
        teacher_policy = teacher
        teacher_fn = TeacherOracle(teacher, teacher_normalizer)
        normalizer.load_state_dict(teacher_normalizer.state_dict())
        normalizer.freeze(False)
    else:
        teacher_fn = teacher
    if teacher_policy is not None:
        student.init_from_teacher(teacher_policy)

    optimizer = torch.optim.Adam(student.parameters(), lr=cfg.student.learning_rate)
    pool = EnvPool(
        cfg,
        num_envs=cfg.student.num_envs,
        seed=seed,
        terrain_mode="flat",
        terrain_kinds=cfg.student.terrain_kinds,
        envs_per_patch=cfg.student.envs_per_patch,
        noise_enabled=True,
    )
    pool.curriculum.c_k = 1.0
    metrics = MetricsWriter(out / "student_metrics.csv", METRIC_COLUMNS)
    ckpt_path = out / ("student_gated.ckpt" if gated else "student_nogate.ckpt")

    hidden = student.initial_hidden(pool.num_envs)
    carry_reset = np.zeros(pool.num_envs, dtype=bool)
    bundle = pool.reset_all()
    mode_now = "flat"
    try:
        for epoch in range(epochs):
            if cfg.student.follow_schedule:
                c_sk, mode = student_schedule(epoch)
            else:
                c_sk, mode = 0.0, "flat"
            pool.curriculum.c_sk = c_sk
            if mode != mode_now:
                pool.rebuild_terrain(mode if mode == "adaptive" else "flat")
                bundle = pool.observe()
                hidden = student.initial_hidden(pool.num_envs)
                carry_reset = np.zeros(pool.num_envs, dtype=bool)
                mode_now = mode
            elif mode == "adaptive" and epoch % 5 == 0 and epoch > 10:
                pool.curriculum_update()
                bundle = pool.observe()
                hidden = student.initial_hidden(pool.num_envs)
                carry_reset = np.zeros(pool.num_envs, dtype=bool)

            batch, bundle, hidden, carry_reset, h0, roll_stats = collect_student_rollout(
                pool, student, teacher_fn, normalizer, bundle, hidden, carry_reset,
                cfg.student.horizon,
            )
            losses = tbptt_update(
                student, optimizer, batch, h0,
                cfg.student.tbptt_steps, cfg.student.update_epochs,
                cfg.student.recon_weight, cfg.student.max_grad_norm,
            )
            metrics.write({
                "epoch": epoch,
                "loss_bc": losses["loss_bc"],
                "loss_re": losses["loss_re"],
                "loss_total": losses["loss_total"],
                "c_sk": c_sk,
                "terrain_mode": mode_now,
                **roll_stats,
            })
            if (epoch + 1) % cfg.student.checkpoint_every == 0 or epoch == epochs - 1:
                save_checkpoint(
                    ckpt_path,
                    student_checkpoint_payload(
                        student, optimizer, normalizer, pool, epoch + 1, cfg,
                        hidden, carry_reset, gated,
                    ),
                )
    except TrainingDiverged:
        save_checkpoint(
            out / "student_lastgood.ckpt",
            student_checkpoint_payload(
                student, optimizer, normalizer, pool, epoch, cfg, hidden, carry_reset, gated
            ),
        )
        metrics.close()
        raise
    metrics.close()
    return {"checkpoint": ckpt_path, "metrics": out / "student_metrics.csv"}

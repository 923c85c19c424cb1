"""PPO training of the privileged teacher policy."""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, echo_config, to_dict
from .envpool import EnvPool
from .metrics import MetricsWriter
from .networks import Critic, TeacherPolicy
from .perception import ObservationNormalizer
from .ppo import PPOSettings, PPOTrainer, TrainingDiverged, gae, gaussian_log_prob_np
from .rewards import RewardBreakdown
from .seeding import STREAM_ACTION, STREAM_SHUFFLE, rng_stream

METRIC_COLUMNS = [
    "iteration", "reward_mean", "terminations", "displacement_mean",
    "policy_loss", "value_loss", "entropy", "lr", "c_k",
] + [f"term_{name}" for name in RewardBreakdown.TERM_NAMES]


def normalized_teacher_obs(bundle, normalizer: ObservationNormalizer, update: bool):
    if update:
        normalizer.proprio.update(bundle.proprio)
        normalizer.extero.update(bundle.extero_clean)
        normalizer.privileged.update(bundle.privileged)
    return (
        normalizer.proprio.normalize(bundle.proprio).astype(np.float32),
        normalizer.extero.normalize(bundle.extero_clean).astype(np.float32),
        normalizer.privileged.normalize(bundle.privileged).astype(np.float32),
    )


def teacher_checkpoint_payload(policy, critic, trainer, normalizer, pool, iteration, cfg,
                               action_rng, shuffle_rng) -> dict:
    return {
        "kind": "teacher",
        "iteration": iteration,
        "policy": policy.state_dict(),
        "critic": critic.state_dict(),
        "trainer": trainer.state_dict(),
        "normalizer": normalizer.state_dict(),
        "pool": pool.state_dict(),
        "config": to_dict(cfg),
        "rngs": pickle.dumps((action_rng, shuffle_rng)),
        "torch_rng": torch.get_rng_state(),
    }


def load_teacher_policy(path: str | Path) -> tuple[TeacherPolicy, ObservationNormalizer, dict]:
    """Frozen teacher policy + its normalization statistics from a checkpoint."""
    payload = load_checkpoint(path)
    if payload.get("kind") != "teacher":
        raise ValueError(f"{path}: not a teacher checkpoint")
    policy = TeacherPolicy()
    policy.load_state_dict(payload["policy"])
    policy.eval()
    normalizer = ObservationNormalizer()
    normalizer.load_state_dict(payload["normalizer"])
    normalizer.freeze()
    return policy, normalizer, payload


def train_teacher(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    seed: int | None = None,
    iterations: int | None = None,
    resume: str | Path | None = None,
) -> dict:
    """Run teacher PPO; returns paths to the final checkpoint and metrics CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    iterations = cfg.teacher.iterations if iterations is None else iterations
    echo_config(cfg, out)

    torch.manual_seed(seed)
    policy = TeacherPolicy()
    critic = Critic()
    trainer = PPOTrainer(policy, critic, cfg.ppo)
    normalizer = ObservationNormalizer()
    pool = EnvPool(
        cfg,
        num_envs=cfg.teacher.num_envs,
        seed=seed,
        terrain_mode=cfg.teacher.terrain_mode,
        terrain_kinds=cfg.teacher.terrain_kinds,
        envs_per_patch=cfg.teacher.envs_per_patch,
        noise_enabled=False,
    )
    action_rng = rng_stream(seed, STREAM_ACTION)
    shuffle_rng = rng_stream(seed, STREAM_SHUFFLE)
    start_iteration = 0

    if resume is not None:
        payload = load_checkpoint(resume)
        policy.load_state_dict(payload["policy"])
        critic.load_state_dict(payload["critic"])
        trainer.load_state_dict(payload["trainer"])
        normalizer.load_state_dict(payload["normalizer"])
        pool.load_state_dict(payload["pool"])
        action_rng, shuffle_rng = pickle.loads(payload["rngs"])
        torch.set_rng_state(payload["torch_rng"])
        start_iteration = int(payload["iteration"])

    metrics = MetricsWriter(out / "teacher_metrics.csv", METRIC_COLUMNS)
    ckpt_path = out / "teacher.ckpt"
    horizon = cfg.teacher.horizon
    n = pool.num_envs
    # the published minibatch size refers to the full-scale environment count;
    # scale it with the pool so the update count per iteration is preserved
    minibatch = max(32, int(round(cfg.ppo.minibatch_size * n / 1000)))
    log_std = policy.log_std.detach().numpy()

    bundle = pool.observe() if resume is not None else pool.reset_all()
    try:
        for iteration in range(start_iteration, iterations):
            buf = {
                "proprio": np.zeros((horizon, n, bundle.proprio.shape[1]), dtype=np.float32),
                "extero": np.zeros((horizon, n, bundle.extero_clean.shape[1]), dtype=np.float32),
                "privileged": np.zeros((horizon, n, bundle.privileged.shape[1]), dtype=np.float32),
                "actions": np.zeros((horizon, n, 16), dtype=np.float32),
                "log_probs": np.zeros((horizon, n), dtype=np.float32),
            }
            rew = np.zeros((horizon, n))
            dns = np.zeros((horizon, n), dtype=bool)
            values = np.zeros((horizon + 1, n))
            term_sums = {k: 0.0 for k in RewardBreakdown.TERM_NAMES}
            terminations = 0
            displacement = []

            log_std = policy.log_std.detach().numpy()
            std = np.exp(log_std)
            for t in range(horizon):
                po, ex, pv = normalized_teacher_obs(bundle, normalizer, update=True)
                with torch.no_grad():
                    mean, _, _ = policy(torch.from_numpy(po), torch.from_numpy(ex), torch.from_numpy(pv))
                    value = critic(torch.from_numpy(po), torch.from_numpy(ex), torch.from_numpy(pv))
                mean = mean.numpy()
                action = mean + std * action_rng.standard_normal(mean.shape)
                buf["proprio"][t] = po
                buf["extero"][t] = ex
                buf["privileged"][t] = pv
                buf["actions"][t] = action
                buf["log_probs"][t] = gaussian_log_prob_np(mean, log_std, action)
                values[t] = value.numpy()

                bundle, breakdown, dones, info = pool.step(action.astype(np.float64))
                rew[t] = breakdown.total
                dns[t] = dones
                terminations += int(info["terminated"].sum())
                if dones.any():
                    displacement.extend(info["final_displacement"][dones].tolist())
                for k in RewardBreakdown.TERM_NAMES:
                    term_sums[k] += float(getattr(breakdown, k).mean())

            po, ex, pv = normalized_teacher_obs(bundle, normalizer, update=False)
            with torch.no_grad():
                values[horizon] = critic(
                    torch.from_numpy(po), torch.from_numpy(ex), torch.from_numpy(pv)
                ).numpy()

            adv, ret = gae(rew, values, dns, cfg.ppo.discount, cfg.ppo.gae_lambda)
            batch = dict(buf)
            batch["advantages"] = adv.astype(np.float32)
            batch["returns"] = ret.astype(np.float32)
            stats = trainer.update(batch, shuffle_rng, minibatch_size=minibatch)

            pool.curriculum.advance()
            if (
                cfg.teacher.terrain_mode == "adaptive"
                and (iteration + 1) % cfg.teacher.curriculum_every == 0
            ):
                pool.curriculum_update()
                bundle = pool.observe()

            row = {
                "iteration": iteration,
                "reward_mean": float(rew.mean()),
                "terminations": terminations,
                "displacement_mean": float(np.mean(displacement)) if displacement else 0.0,
                "policy_loss": stats["policy_loss"],
                "value_loss": stats["value_loss"],
                "entropy": stats["entropy"],
                "lr": stats["lr"],
                "c_k": pool.curriculum.c_k,
            }
            for k in RewardBreakdown.TERM_NAMES:
                row[f"term_{k}"] = term_sums[k] / horizon
            metrics.write(row)

            if (iteration + 1) % cfg.teacher.checkpoint_every == 0 or iteration == iterations - 1:
                save_checkpoint(
                    ckpt_path,
                    teacher_checkpoint_payload(
                        policy, critic, trainer, normalizer, pool, iteration + 1, cfg,
                        action_rng, shuffle_rng,
                    ),
                )
    except TrainingDiverged:
        save_checkpoint(
            out / "teacher_lastgood.ckpt",
            teacher_checkpoint_payload(
                policy, critic, trainer, normalizer, pool, iteration, cfg, action_rng, shuffle_rng
            ),
        )
        metrics.close()
        raise
    metrics.close()
    return {"checkpoint": ckpt_path, "metrics": out / "teacher_metrics.csv"}

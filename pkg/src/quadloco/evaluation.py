"""Evaluation protocols: step-traversal sweeps, terrain success grids,
teacher-student action-difference and reconstruction tables, and
belief-decoder introspection traces.

All protocols run policies frozen (parameters and normalization
statistics are fingerprinted before and after) and are deterministic
under a fixed seed. Outputs are CSV tables plus static plots.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import perception, terrain
from .config import ExperimentConfig
from .envpool import EnvPool
from .kinematics import NUM_LEGS
from .networks import StudentPolicy, TeacherPolicy, parameter_fingerprint
from .perception import ObservationNormalizer
from .seeding import STREAM_EVAL, rng_stream
from .simulation import PRIVILEGED_LAYOUT, feet_world

NOISE_PRESETS = {"z_small": perception.Z_SMALL, "z_large": perception.Z_LARGE}


@dataclass
class EvalProtocol:
    protocol: str
    trials: int
    command: tuple[float, float, float]
    window_s: float
    noise: str | None = None


class TeacherRunner:
    """Teacher actions on raw bundles (clean height samples + privileged state)."""

    def __init__(self, policy: TeacherPolicy, normalizer: ObservationNormalizer):
        self.policy = policy
        self.normalizer = normalizer
        self.policy.eval()
        self.normalizer.freeze()

    def reset(self, n: int, done: np.ndarray | None = None) -> None:
        pass

    def act(self, bundle) -> np.ndarray:
        po = self.normalizer.proprio.normalize(bundle.proprio).astype(np.float32)
        ex = self.normalizer.extero.normalize(bundle.extero_clean).astype(np.float32)
        pv = self.normalizer.privileged.normalize(bundle.privileged).astype(np.float32)
        with torch.no_grad():
            mean, _, _ = self.policy(torch.from_numpy(po), torch.from_numpy(ex), torch.from_numpy(pv))
        return mean.numpy().astype(np.float64)

    def fingerprint(self) -> float:
        return parameter_fingerprint(self.policy)


class StudentRunner:
    """Recurrent student actions on raw bundles (noisy height samples only)."""

    def __init__(self, student: StudentPolicy, normalizer: ObservationNormalizer):
        self.student = student
        self.normalizer = normalizer
        self.student.eval()
        self.normalizer.freeze()
        self.hidden = None
        self.last = None

    def reset(self, n: int, done: np.ndarray | None = None) -> None:
        if done is None or self.hidden is None:
            self.hidden = self.student.initial_hidden(n)
        else:
            keep = torch.from_numpy(~done).to(self.hidden.dtype).unsqueeze(-1)
            self.hidden = self.hidden * keep.unsqueeze(0)

    def act(self, bundle) -> np.ndarray:
        po = self.normalizer.proprio.normalize(bundle.proprio).astype(np.float32)
        ex = self.normalizer.extero.normalize(bundle.extero_noisy).astype(np.float32)
        with torch.no_grad():
            action, belief, b_raw, alpha, extero_hat, priv_hat, self.hidden = self.student(
                torch.from_numpy(po).unsqueeze(0), torch.from_numpy(ex).unsqueeze(0), self.hidden
            )
        self.last = {
            "belief": belief[0].numpy(),
            "alpha": alpha[0].numpy(),
            "extero_hat": extero_hat[0].numpy(),
            "priv_hat": priv_hat[0].numpy(),
        }
        return action[0].numpy().astype(np.float64)

    def decoded_raw(self) -> dict[str, np.ndarray]:
        """De-normalized decoder outputs from the last act() call."""
        ex = self.last["extero_hat"] * self.normalizer.extero.std + self.normalizer.extero.mean
        pv = self.last["priv_hat"] * self.normalizer.privileged.std + self.normalizer.privileged.mean
        return {"extero": ex, "privileged": pv, "alpha": self.last["alpha"]}

    def fingerprint(self) -> float:
        return parameter_fingerprint(self.student)


def binomial_ci(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson interval."""
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    denom = 1.0 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _eval_cfg(cfg: ExperimentConfig, window_s: float) -> ExperimentConfig:
    out = dataclasses.replace(cfg)
    out.sim = dataclasses.replace(cfg.sim, episode_length_s=window_s)
    return out


def _run_success_trials(
    runner,
    cfg: ExperimentConfig,
    patch: terrain.TerrainPatch,
    command: tuple[float, float, float],
    window_s: float,
    trials: int,
    seed: int,
    success_fn,
    noise: str | None = None,
    init_randomization: float = 0.5,
    spawn_xy: tuple[float, float] = (0.0, 0.0),
) -> float:
    """Fraction of trials whose rollout satisfies ``success_fn`` before failing."""
    run_cfg = _eval_cfg(cfg, window_s)
    pool = EnvPool(
        run_cfg, num_envs=trials, seed=seed,
        envs_per_patch=trials, noise_enabled=noise is not None,
        explicit_patch=patch, fixed_command=np.asarray(command), spawn_xy=spawn_xy,
    )
    pool.curriculum.c_k = init_randomization
    pool.curriculum.c_sk = 1.0
    if noise is not None:
        pool.forced_regime = noise
    bundle = pool.reset_all()
    runner.reset(trials)
    alive = np.ones(trials, dtype=bool)
    succeeded = np.zeros(trials, dtype=bool)
    steps = pool.params.max_episode_steps
    for _ in range(steps):
        action = runner.act(bundle)
        bundle, _, dones, info = pool.step(action)
        succeeded |= alive & success_fn(pool, info)
        alive &= ~info["terminated"]
        runner.reset(trials, dones)
        if (succeeded | ~alive).all():
            break
    return float(succeeded.mean())


def step_sweep(
    runner,
    cfg: ExperimentConfig,
    heights: list[float] | None = None,
    trials: int | None = None,
    seed: int = 0,
    noise: str | None = None,
) -> list[dict]:
    """Success rate of surmounting a single step per height.

    Success requires every foot (front and hind) beyond the riser while
    the robot is still alive, under a constant forward command.
    """
    heights = list(cfg.eval.step_heights if heights is None else heights)
    trials = cfg.eval.trials if trials is None else trials
    edge_x = 1.0
    command = (cfg.eval.step_command_speed, 0.0, 0.0)

    rows = []
    for k, h in enumerate(heights):
        patch = terrain.single_step_patch(h, edge_x=edge_x)

        def crossed(pool, info):
            feet = feet_world(pool.state, pool.model)
            return feet[..., 0].min(axis=1) > edge_x + 0.05

        rate = _run_success_trials(
            runner, cfg, patch, command, cfg.eval.step_window_s, trials,
            seed=int(rng_stream(seed, STREAM_EVAL, k).integers(2**31)),
            success_fn=crossed, noise=noise,
        )
        lo, hi = binomial_ci(int(round(rate * trials)), trials)
        rows.append({"height": h, "success_rate": rate, "ci_lo": lo, "ci_hi": hi, "trials": trials})
    return rows


def traversal_success(
    runner,
    cfg: ExperimentConfig,
    patch: terrain.TerrainPatch,
    trials: int,
    seed: int,
    noise: str | None = None,
) -> float:
    """Fraction of trials traversing the threshold distance without failure."""
    threshold = cfg.eval.traversal_threshold_m
    command = (cfg.eval.grid_command_speed, 0.0, 0.0)

    def far_enough(pool, info):
        return info["final_displacement"] >= threshold

    return _run_success_trials(
        runner, cfg, patch, command, cfg.eval.grid_window_s, trials, seed,
        success_fn=far_enough, noise=noise,
    )


def terrain_grid(
    runner,
    cfg: ExperimentConfig,
    kind: str,
    seed: int = 0,
    grid_size: int | None = None,
    trials: int | None = None,
    noise: str | None = None,
) -> list[dict]:
    """Success-rate grid over a terrain kind's parameter ranges."""
    grid_size = cfg.eval.grid_size if grid_size is None else grid_size
    trials = cfg.eval.grid_trials if trials is None else trials
    names = list(terrain.PARAM_RANGES[kind].keys())
    names = [n for n in names if n != "levels"][:2]
    axes = [np.linspace(*terrain.PARAM_RANGES[kind][n][:2], grid_size) for n in names]
    rows = []
    cells = [(i, j) for i in range(grid_size) for j in range(grid_size)] if len(axes) == 2 else [
        (i, None) for i in range(grid_size)
    ]
    for cell_index, (i, j) in enumerate(cells):
        params = {names[0]: float(axes[0][i])}
        if j is not None:
            params[names[1]] = float(axes[1][j])
        spec = terrain.TerrainSpec(kind=kind, params=params, seed=seed * 7919 + cell_index)
        patch = terrain.generate(spec)
        rate = traversal_success(
            runner, cfg, patch, trials,
            seed=int(rng_stream(seed, STREAM_EVAL, 1000 + cell_index).integers(2**31)),
            noise=noise,
        )
        row = {"kind": kind, names[0]: params[names[0]], "success_rate": rate, "trials": trials}
        if j is not None:
            row[names[1]] = params[names[1]]
        rows.append(row)
    return rows


def action_and_recon_tables(
    teacher_runner: TeacherRunner,
    student_runners: dict[str, StudentRunner],
    cfg: ExperimentConfig,
    kinds: list[str],
    noise_names: tuple[str, ...] = ("z_small", "z_large"),
    steps: int | None = None,
    draws: int | None = None,
    seed: int = 0,
) -> tuple[list[dict], list[dict]]:
    """Action-difference and height-reconstruction tables.

    For every terrain kind, terrain parameters are redrawn ``draws`` times
    and ``steps`` student-policy time steps are collected per draw (noted:
    steps are per terrain draw). Cells report mean and std over all
    steps of the squared teacher-student action distance and of the
    mean squared height-sample reconstruction error (raw units).
    """
    steps = cfg.eval.action_diff_steps if steps is None else steps
    draws = cfg.eval.action_diff_draws if draws is None else draws
    action_rows, recon_rows = [], []
    for kind_index, kind in enumerate(kinds):
        for noise_name in noise_names:
            for variant, runner in student_runners.items():
                diffs, recons = [], []
                for draw in range(draws):
                    rng = rng_stream(seed, STREAM_EVAL, 2000 + kind_index, draw)
                    spec = terrain.sample_spec(kind, rng)
                    patch = terrain.generate(spec)
                    d, r = _action_diff_rollout(
                        teacher_runner, runner, cfg, patch, noise_name, steps,
                        seed=int(rng.integers(2**31)),
                    )
                    diffs.extend(d)
                    recons.extend(r)
                action_rows.append({
                    "terrain": kind, "noise": noise_name, "variant": variant,
                    "mean": float(np.mean(diffs)), "std": float(np.std(diffs)),
                    "steps": len(diffs),
                })
                recon_rows.append({
                    "terrain": kind, "noise": noise_name, "variant": variant,
                    "mean": float(np.mean(recons)), "std": float(np.std(recons)),
                    "steps": len(recons),
                })
    return action_rows, recon_rows


def _action_diff_rollout(
    teacher_runner: TeacherRunner,
    student_runner: StudentRunner,
    cfg: ExperimentConfig,
    patch: terrain.TerrainPatch,
    noise_name: str,
    steps: int,
    seed: int,
    num_envs: int = 4,
) -> tuple[list[float], list[float]]:
    pool = EnvPool(
        cfg, num_envs=num_envs, seed=seed, envs_per_patch=num_envs,
        noise_enabled=True, explicit_patch=patch,
    )
    pool.curriculum.c_k = 1.0
    pool.curriculum.c_sk = 1.0
    pool.forced_regime = noise_name
    bundle = pool.reset_all()
    student_runner.reset(num_envs)
    diffs, recons = [], []
    for _ in range(int(np.ceil(steps / num_envs))):
        a_student = student_runner.act(bundle)
        a_teacher = teacher_runner.act(bundle)
        diffs.extend(((a_student - a_teacher) ** 2).sum(axis=1).tolist())
        decoded = student_runner.decoded_raw()
        err = ((decoded["extero"] - bundle.extero_clean) ** 2).mean(axis=1)
        recons.extend(err.tolist())
        bundle, _, dones, _ = pool.step(a_student)
        student_runner.reset(num_envs, dones)
    return diffs[:steps], recons[:steps]


def introspect(
    student_runner: StudentRunner,
    cfg: ExperimentConfig,
    physical_patch: terrain.TerrainPatch,
    perceived_patch: terrain.TerrainPatch | None = None,
    command: tuple[float, float, float] = (0.5, 0.0, 0.0),
    steps: int = 250,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> list[dict]:
    """Trace decoded terrain and friction while physics and perception disagree.

    Contacts come from ``physical_patch``; height samples are drawn from
    ``perceived_patch`` (defaults to the physical one). Returns per-step
    records and optionally writes a CSV and a static plot.
    """
    from .simulation import initial_state, privileged_state, reset_envs, step as sim_step

    perceived = physical_patch if perceived_patch is None else perceived_patch
    model, params = cfg.robot, cfg.sim
    rng = rng_stream(seed, STREAM_EVAL, 5000)
    state = initial_state(1, model, params)
    reset_envs(state, np.array([0]), rng, model, params, physical_patch, c_k=0.0)
    student_runner.reset(1)
    cmd = np.asarray(command, dtype=np.float64).reshape(1, 3)
    friction_slice = PRIVILEGED_LAYOUT["friction_coefficients"]

    records = []
    action = np.zeros((1, 16))
    for t in range(steps):
        state, term, info = sim_step(
            state, action * params.action_scale, physical_patch, cmd, model, params
        )
        feet = info["feet"]
        clean_perceived = perception.sample_heights(perceived, feet)
        clean_physical = perception.sample_heights(physical_patch, feet)
        priv = privileged_state(state)
        bundle = perception.assemble(state, cmd, clean_physical, clean_perceived, priv, params)
        action = student_runner.act(bundle)
        decoded = student_runner.decoded_raw()
        records.append({
            "step": t,
            "front_decoded_mean": float(decoded["extero"][0, :52].mean()),
            "front_perceived_mean": float(clean_perceived[0, :52].mean()),
            "front_physical_mean": float(clean_physical[0, :52].mean()),
            "decoded_friction_mean": float(decoded["privileged"][0, friction_slice].mean()),
            "true_friction_mean": float(state.foot_friction.mean()),
            "alpha_mean": float(decoded["alpha"].mean()),
            "alpha_min": float(decoded["alpha"].min()),
            "alpha_max": float(decoded["alpha"].max()),
            "base_x": float(state.base_pos[0, 0]),
            "terminated": bool(term.any[0]),
        })
        if term.any[0]:
            break
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "introspection.csv", records)
        _plot_introspection(records, out / "introspection.png")
    return records


def _plot_introspection(records: list[dict], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [r["step"] for r in records]
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(steps, [r["front_perceived_mean"] for r in records], label="perceived")
    axes[0].plot(steps, [r["front_physical_mean"] for r in records], label="physical")
    axes[0].plot(steps, [r["front_decoded_mean"] for r in records], label="decoded")
    axes[0].set_ylabel("front height samples (m)")
    axes[0].legend()
    axes[1].plot(steps, [r["decoded_friction_mean"] for r in records], label="decoded friction")
    axes[1].plot(steps, [r["true_friction_mean"] for r in records], label="true friction")
    axes[1].set_xlabel("control step")
    axes[1].set_ylabel("friction")
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_step_sweep(rows: list[dict], path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    heights = [r["height"] for r in rows]
    rates = [r["success_rate"] for r in rows]
    lo = [r["ci_lo"] for r in rows]
    hi = [r["ci_hi"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(heights, rates, marker="o")
    ax.fill_between(heights, lo, hi, alpha=0.2)
    ax.set_xlabel("step height (m)")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        return
    keys = list(rows[0].keys())
    for r in rows[1:]:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)

"""Vectorized training environments.

An EnvPool owns a set of independent environments partitioned into
groups that share a terrain patch. It wires the simulator, perception,
rewards, commands, domain randomization, episode bookkeeping, the noise
regimes and the terrain curriculum into the step/reset interface the
training loops consume. Observations are returned raw; normalization is
owned by the trainers.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass

import numpy as np

from . import curriculum as curriculum_mod
from . import perception, rewards, terrain
from .config import CommandSettings, ExperimentConfig
from .kinematics import NUM_LEGS, RobotModel
from .seeding import (
    STREAM_COMMAND,
    STREAM_CURRICULUM,
    STREAM_EPISODE,
    STREAM_NOISE,
    rng_stream,
)
from .simulation import (
    SimParams,
    SimState,
    feet_world,
    initial_state,
    privileged_state,
    reset_envs,
    step as sim_step,
)


def sample_command(rng: np.random.Generator, settings: CommandSettings, n: int = 1) -> np.ndarray:
    """Velocity commands (n, 3): (v_x, v_y, yaw rate), with a standing mass at zero."""
    cmd = np.stack(
        [
            rng.uniform(*settings.vx_range, n),
            rng.uniform(*settings.vy_range, n),
            rng.uniform(*settings.yaw_range, n),
        ],
        axis=-1,
    )
    zero = rng.uniform(size=n) < settings.zero_probability
    cmd[zero] = 0.0
    return cmd


@dataclass
class GroupSpec:
    kind: str
    particle_index: int
    spec: terrain.TerrainSpec


class EnvPool:
    """A batch of environments grouped by shared terrain patch."""

    def __init__(
        self,
        cfg: ExperimentConfig,
        num_envs: int,
        seed: int,
        terrain_mode: str = "flat",
        terrain_kinds: tuple[str, ...] | None = None,
        envs_per_patch: int = 8,
        noise_enabled: bool = False,
        spawn_xy: tuple[float, float] = (0.0, 0.0),
        explicit_patch: terrain.TerrainPatch | None = None,
        fixed_command: np.ndarray | None = None,
    ):
        self.cfg = cfg
        self.model: RobotModel = cfg.robot
        self.params: SimParams = cfg.sim
        self.num_envs = num_envs
        self.seed = seed
        self.terrain_mode = "explicit" if explicit_patch is not None else terrain_mode
        self.terrain_kinds = tuple(terrain_kinds or cfg.teacher.terrain_kinds)
        self.envs_per_patch = max(1, min(envs_per_patch, num_envs))
        self.noise_enabled = noise_enabled
        self.spawn_xy = spawn_xy
        self.explicit_patch = explicit_patch
        self.fixed_command = None if fixed_command is None else np.asarray(fixed_command, dtype=np.float64)

        self.episode_rng = rng_stream(seed, STREAM_EPISODE)
        self.command_rng = rng_stream(seed, STREAM_COMMAND)
        self.noise_rng = rng_stream(seed, STREAM_NOISE)
        self.curriculum_rng = rng_stream(seed, STREAM_CURRICULUM)

        self.curriculum = curriculum_mod.CurriculumState(
            c_k=cfg.curriculum.initial_factor, d=cfg.curriculum.convergence_rate
        )
        if terrain_mode == "adaptive":
            for kind in self.terrain_kinds:
                self.curriculum.particle_sets[kind] = curriculum_mod.ParticleSet.initialize(
                    kind, self.curriculum_rng, cfg.curriculum.particles_per_kind
                )

        self.state = initial_state(num_envs, self.model, self.params)
        self.commands = np.zeros((num_envs, 3))
        self.noise_z = np.zeros((num_envs, perception.Z_DIM, NUM_LEGS))
        self.noise_w = np.zeros((num_envs, NUM_LEGS, 3))
        self.regimes = np.zeros(num_envs, dtype=np.int64)
        nx, ny = terrain.flat_patch().num_cells
        self.cell_offsets = np.zeros((num_envs, nx, ny))
        self.max_displacement = np.zeros(num_envs)
        self.episode_records: list[tuple[str, int, bool]] = []
        self.regime_log: list[tuple[int, str]] = []
        self.forced_regime: str | None = None

        self.group_specs: list[GroupSpec] = []
        self.group_slices: list[slice] = []
        self.patches: list[terrain.TerrainPatch] = []
        self._build_groups()

    # ------------------------------------------------------------------ terrain

    def _draw_group_spec(self, group_index: int) -> GroupSpec:
        if self.terrain_mode == "explicit":
            return GroupSpec(kind=self.explicit_patch.spec.kind, particle_index=-1,
                             spec=self.explicit_patch.spec)
        if self.terrain_mode == "flat":
            return GroupSpec(kind="flat", particle_index=-1,
                             spec=terrain.TerrainSpec("rough", {"amplitude": 0.0}, seed=0))
        kind = self.terrain_kinds[group_index % len(self.terrain_kinds)]
        ps = self.curriculum.particle_sets[kind]
        particle = int(self.curriculum_rng.integers(len(ps.particles)))
        spec = ps.spec(particle, seed=int(self.curriculum_rng.integers(2**31)))
        return GroupSpec(kind=kind, particle_index=particle, spec=spec)

    def _build_groups(self) -> None:
        self.group_specs = []
        self.group_slices = []
        self.patches = []
        n_groups = int(np.ceil(self.num_envs / self.envs_per_patch))
        for g in range(n_groups):
            lo = g * self.envs_per_patch
            hi = min(self.num_envs, lo + self.envs_per_patch)
            gspec = self._draw_group_spec(g)
            self.group_specs.append(gspec)
            self.group_slices.append(slice(lo, hi))
            if self.terrain_mode == "explicit":
                self.patches.append(self.explicit_patch)
            else:
                self.patches.append(terrain.generate(gspec.spec))

    def rebuild_terrain(self, terrain_mode: str | None = None) -> None:
        """Redraw every group's terrain (curriculum update or mode switch) and reset."""
        if terrain_mode is not None:
            self.terrain_mode = terrain_mode
            if terrain_mode == "adaptive" and not self.curriculum.particle_sets:
                for kind in self.terrain_kinds:
                    self.curriculum.particle_sets[kind] = curriculum_mod.ParticleSet.initialize(
                        kind, self.curriculum_rng, self.cfg.curriculum.particles_per_kind
                    )
        self._build_groups()
        self.reset_all()

    def curriculum_update(self) -> dict[str, float]:
        """Score particles from finished episodes and advance the particle filter."""
        stats = {}
        if self.terrain_mode != "adaptive":
            self.episode_records.clear()
            return stats
        by_kind: dict[str, dict[int, list[bool]]] = {}
        for kind, particle, success in self.episode_records:
            by_kind.setdefault(kind, {}).setdefault(particle, []).append(success)
        for kind, ps in self.curriculum.particle_sets.items():
            scores = np.full(len(ps.particles), 0.5)
            for particle, results in by_kind.get(kind, {}).items():
                scores[particle] = float(np.mean(results))
            ps.update(scores, self.curriculum_rng)
            stats[f"score_{kind}"] = float(scores.mean())
        self.episode_records.clear()
        self._build_groups()
        self.reset_all()
        return stats

    # ------------------------------------------------------------------ episodes

    def _draw_noise(self, idx: np.ndarray) -> None:
        c_sk = self.curriculum.c_sk
        for i in idx:
            if not self.noise_enabled:
                self.noise_z[i] = 0.0
                self.noise_w[i] = 0.0
                self.regimes[i] = -1
                continue
            if self.forced_regime is not None:
                params = perception.NoiseParams.preset(self.forced_regime, c_sk)
            else:
                params = perception.select_regime(self.noise_rng, c_sk, z7=self.cfg.noise.z7)
            self.noise_z[i] = params.z
            self.noise_w[i] = perception.draw_episode_noise(self.noise_rng, params)
            self.regimes[i] = perception.REGIMES.index(params.regime) if params.regime in perception.REGIMES else -1
            self.regime_log.append((int(i), params.regime))

    def _reset_indices(self, idx: np.ndarray) -> None:
        if len(idx) == 0:
            return
        for g, sl in enumerate(self.group_slices):
            local = idx[(idx >= sl.start) & (idx < sl.stop)]
            if len(local) == 0:
                continue
            reset_envs(
                self.state, local, self.episode_rng, self.model, self.params,
                self.patches[g], self.curriculum.c_k, self.spawn_xy,
            )
        if self.fixed_command is not None:
            self.commands[idx] = self.fixed_command
        else:
            self.commands[idx] = sample_command(self.command_rng, self.cfg.commands, len(idx))
        self._draw_noise(idx)
        if self.noise_enabled:
            self.cell_offsets[idx] = self.noise_rng.normal(
                0.0, 1.0, (len(idx),) + self.cell_offsets.shape[1:]
            ) * (self.cfg.noise.cell_offset_scale * self.curriculum.c_sk)
        else:
            self.cell_offsets[idx] = 0.0
        self.max_displacement[idx] = 0.0

    def reset_all(self) -> perception.ObservationBundle:
        self._reset_indices(np.arange(self.num_envs))
        return self.observe()

    def _extero_into(self, clean: np.ndarray, noisy: np.ndarray, feet: np.ndarray,
                     mask: np.ndarray) -> None:
        """Fill extero rows selected by ``mask``; one noise draw per row."""
        for g, sl in enumerate(self.group_slices):
            rows = np.flatnonzero(mask[sl]) + sl.start
            if len(rows) == 0:
                continue
            patch = self.patches[g]
            clean[rows] = perception.sample_heights(patch, feet[rows])
            if self.noise_enabled:
                noisy[rows] = perception.apply_noise_batch(
                    patch, feet[rows], self.noise_z[rows], self.noise_rng,
                    w=self.noise_w[rows], cell_offsets=self.cell_offsets[rows],
                )
            else:
                noisy[rows] = clean[rows]

    def observe(self) -> perception.ObservationBundle:
        feet = feet_world(self.state, self.model)
        clean = np.zeros((self.num_envs, perception.EXTERO_DIM))
        noisy = np.zeros((self.num_envs, perception.EXTERO_DIM))
        self._extero_into(clean, noisy, feet, np.ones(self.num_envs, dtype=bool))
        priv = privileged_state(self.state)
        return perception.assemble(self.state, self.commands, clean, noisy, priv, self.params)

    def step(self, actions: np.ndarray):
        """Advance every environment one control step.

        Returns (bundle, breakdown, dones, info). The bundle reflects the
        post-step state, with already-reset rows for environments that
        finished; ``info['terminated']`` distinguishes failures from
        timeouts and per-episode bookkeeping feeds the terrain curriculum.
        """
        n = self.num_envs
        terminated = np.zeros(n, dtype=bool)
        feet = np.zeros((n, NUM_LEGS, 3))
        tau = np.zeros((n, 12))
        collision = np.zeros(n, dtype=bool)
        scaled = np.asarray(actions, dtype=np.float64) * self.params.action_scale

        for g, sl in enumerate(self.group_slices):
            sub_state = _slice_state(self.state, sl)
            new_state, term, info = sim_step(
                sub_state, scaled[sl], self.patches[g], self.commands[sl], self.model, self.params
            )
            _write_state(self.state, new_state, sl)
            terminated[sl] = term.any
            feet[sl] = info["feet"]
            tau[sl] = info["tau"]
            collision[sl] = info["collision"]

        clean = np.zeros((n, perception.EXTERO_DIM))
        noisy = np.zeros((n, perception.EXTERO_DIM))
        self._extero_into(clean, noisy, feet, np.ones(n, dtype=bool))
        breakdown = rewards.compute(
            self.state, {"tau": tau, "collision": collision}, self.commands, clean,
            self.curriculum.c_k, self.model.knee_thresholds,
        )

        disp = np.linalg.norm(self.state.base_pos[:, :2] - np.asarray(self.spawn_xy), axis=1)
        self.max_displacement = np.maximum(self.max_displacement, disp)
        final_displacement = self.max_displacement.copy()
        timeout = self.state.step_count >= self.params.max_episode_steps
        dones = terminated | timeout

        # mid-episode regime reselection
        if self.noise_enabled:
            mid = (self.state.step_count == self.params.max_episode_steps // 2) & ~dones
            if mid.any():
                self._draw_noise(np.flatnonzero(mid))

        if dones.any():
            idx = np.flatnonzero(dones)
            threshold = self.cfg.curriculum.traversal_threshold_m
            for i in idx:
                g = min(i // self.envs_per_patch, len(self.group_specs) - 1)
                gspec = self.group_specs[g]
                success = bool(self.max_displacement[i] >= threshold and not terminated[i])
                if gspec.particle_index >= 0:
                    self.episode_records.append((gspec.kind, gspec.particle_index, success))
            self._reset_indices(idx)
            # fresh-episode observations for the rows that restarted
            feet_new = feet_world(self.state, self.model)
            mask = np.zeros(n, dtype=bool)
            mask[idx] = True
            self._extero_into(clean, noisy, feet_new, mask)

        priv = privileged_state(self.state)
        bundle = perception.assemble(self.state, self.commands, clean, noisy, priv, self.params)
        info = {
            "terminated": terminated,
            "timeout": timeout,
            "breakdown": breakdown,
            "final_displacement": final_displacement,
        }
        return bundle, breakdown, dones, info

    # ------------------------------------------------------------------ persistence

    def state_dict(self) -> dict:
        return {
            "sim_state": {k: getattr(self.state, k).copy() for k in self.state.__dataclass_fields__},
            "commands": self.commands.copy(),
            "noise_z": self.noise_z.copy(),
            "noise_w": self.noise_w.copy(),
            "regimes": self.regimes.copy(),
            "cell_offsets": self.cell_offsets.copy(),
            "max_displacement": self.max_displacement.copy(),
            "episode_records": list(self.episode_records),
            "group_specs": [(g.kind, g.particle_index, g.spec.to_dict()) for g in self.group_specs],
            "terrain_mode": self.terrain_mode,
            "curriculum": self.curriculum.state_dict(),
            "rngs": pickle.dumps(
                (self.episode_rng, self.command_rng, self.noise_rng, self.curriculum_rng)
            ),
        }

    def load_state_dict(self, d: dict) -> None:
        for k, v in d["sim_state"].items():
            setattr(self.state, k, np.asarray(v).copy())
        self.commands = d["commands"].copy()
        self.noise_z = d["noise_z"].copy()
        self.noise_w = d["noise_w"].copy()
        self.regimes = d["regimes"].copy()
        self.cell_offsets = d["cell_offsets"].copy()
        self.max_displacement = d["max_displacement"].copy()
        self.episode_records = list(d["episode_records"])
        self.terrain_mode = d["terrain_mode"]
        self.curriculum.load_state_dict(d["curriculum"])
        self.group_specs = [
            GroupSpec(kind=k, particle_index=p, spec=terrain.TerrainSpec.from_dict(s))
            for k, p, s in d["group_specs"]
        ]
        self.group_slices = []
        self.patches = []
        for g, gspec in enumerate(self.group_specs):
            lo = g * self.envs_per_patch
            hi = min(self.num_envs, lo + self.envs_per_patch)
            self.group_slices.append(slice(lo, hi))
            self.patches.append(terrain.generate(gspec.spec))
        self.episode_rng, self.command_rng, self.noise_rng, self.curriculum_rng = pickle.loads(d["rngs"])


def _slice_state(state: SimState, sl: slice) -> SimState:
    return SimState(**{k: getattr(state, k)[sl] for k in state.__dataclass_fields__})


def _write_state(state: SimState, sub: SimState, sl: slice) -> None:
    for k in state.__dataclass_fields__:
        getattr(state, k)[sl] = getattr(sub, k)

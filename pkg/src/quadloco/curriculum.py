"""Difficulty schedules: the multiplicative factor, the terrain particle
filter, and the student noise schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import terrain as terrain_mod

DEFAULT_CONVERGENCE = 0.98
DEFAULT_INITIAL_FACTOR = 0.3
PARTICLES_PER_KIND = 50
WEIGHT_FLOOR = 0.05
JITTER_FRACTION = 0.1
DRIFT_GAIN = 0.2
TRAVERSAL_THRESHOLD_M = 4.0


def advance_factor(c_k: float, d: float = DEFAULT_CONVERGENCE) -> float:
    """One curriculum update: c <- c**d, monotone toward 1."""
    if not (0.0 < c_k <= 1.0):
        raise ValueError(f"curriculum factor must lie in (0, 1], got {c_k}")
    if not (0.0 < d < 1.0):
        raise ValueError(f"convergence rate must lie in (0, 1), got {d}")
    return float(c_k**d)


def student_schedule(epoch: int) -> tuple[float, str]:
    """Student noise level and terrain mode for an epoch.

    Flat terrain with zero noise for the first 10 epochs, adaptive
    terrain from epoch 10, and a linear noise ramp from epoch 20 that
    saturates at epoch 100.
    """
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if epoch < 10:
        return 0.0, "flat"
    if epoch < 20:
        return 0.0, "adaptive"
    if epoch < 100:
        return (epoch - 20) / 80.0, "adaptive"
    return 1.0, "adaptive"


def desirability(scores: np.ndarray) -> np.ndarray:
    """Resampling weight for traversability scores, peaked at 0.5."""
    s = np.asarray(scores, dtype=np.float64)
    return s * (1.0 - s) + WEIGHT_FLOOR


def resample_particles(particles: np.ndarray, weights: np.ndarray,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Categorical resampling with replacement; uniform fallback on degenerate weights."""
    particles = np.asarray(particles, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        weights = np.ones(len(particles))
        total = float(len(particles))
    idx = rng.choice(len(particles), size=len(particles), p=weights / total)
    return particles[idx], idx


@dataclass
class ParticleSet:
    """Terrain-parameter particles for one terrain kind."""

    kind: str
    particles: np.ndarray  # (n_particles, n_params)
    param_names: tuple[str, ...]

    @staticmethod
    def initialize(kind: str, rng: np.random.Generator, n: int = PARTICLES_PER_KIND,
                   easy_fraction: float = 0.25) -> "ParticleSet":
        """Start near the easy end of each parameter range."""
        names = tuple(terrain_mod.PARAM_RANGES[kind].keys())
        cols = []
        for name in names:
            lo, hi, direction = terrain_mod.PARAM_RANGES[kind][name]
            width = hi - lo
            if direction >= 0:
                cols.append(rng.uniform(lo, lo + easy_fraction * width, n))
            else:
                cols.append(rng.uniform(hi - easy_fraction * width, hi, n))
        return ParticleSet(kind=kind, particles=np.stack(cols, axis=-1), param_names=names)

    def spec(self, index: int, seed: int) -> terrain_mod.TerrainSpec:
        params = {}
        for j, name in enumerate(self.param_names):
            v = self.particles[index, j]
            params[name] = int(round(v)) if name == "levels" else float(v)
        return terrain_mod.TerrainSpec(kind=self.kind, params=params, seed=seed)

    def update(self, scores: np.ndarray, rng: np.random.Generator) -> None:
        """Reweight by desirability, resample, and jitter toward useful difficulty.

        The jitter mean drifts in the difficulty direction in proportion
        to (score - 0.5), so uniformly easy populations get harder and
        uniformly hard ones back off; its std is a fixed fraction of each
        parameter range and results are clipped to the allowed ranges.
        """
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape[0] != self.particles.shape[0]:
            raise ValueError("one score per particle required")
        weights = desirability(scores)
        resampled, idx = resample_particles(self.particles, weights, rng)
        parent_scores = scores[idx]
        out = resampled.copy()
        for j, name in enumerate(self.param_names):
            lo, hi, direction = terrain_mod.PARAM_RANGES[self.kind][name]
            width = hi - lo
            drift = DRIFT_GAIN * (parent_scores - 0.5) * direction * width
            noise = rng.normal(0.0, JITTER_FRACTION * width, len(out))
            out[:, j] = np.clip(out[:, j] + drift + noise, lo, hi)
        self.particles = out


def update_terrain_particles(particle_set: ParticleSet, scores: np.ndarray,
                             rng: np.random.Generator) -> ParticleSet:
    particle_set.update(scores, rng)
    return particle_set


@dataclass
class CurriculumState:
    """Everything the training loops need to schedule difficulty."""

    c_k: float = DEFAULT_INITIAL_FACTOR
    d: float = DEFAULT_CONVERGENCE
    c_sk: float = 0.0
    epoch: int = 0
    particle_sets: dict[str, ParticleSet] = field(default_factory=dict)

    def advance(self) -> float:
        self.c_k = advance_factor(self.c_k, self.d)
        return self.c_k

    def step_epoch(self) -> tuple[float, str]:
        c_sk, mode = student_schedule(self.epoch)
        self.c_sk = c_sk
        self.epoch += 1
        return c_sk, mode

    def state_dict(self) -> dict:
        return {
            "c_k": self.c_k,
            "d": self.d,
            "c_sk": self.c_sk,
            "epoch": self.epoch,
            "particles": {
                kind: {"particles": ps.particles.copy(), "param_names": list(ps.param_names)}
                for kind, ps in self.particle_sets.items()
            },
        }

    def load_state_dict(self, d: dict) -> None:
        self.c_k = float(d["c_k"])
        self.d = float(d["d"])
        self.c_sk = float(d["c_sk"])
        self.epoch = int(d["epoch"])
        self.particle_sets = {
            kind: ParticleSet(kind=kind, particles=np.asarray(v["particles"]),
                              param_names=tuple(v["param_names"]))
            for kind, v in d["particles"].items()
        }

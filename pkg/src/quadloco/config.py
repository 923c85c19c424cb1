"""Experiment configuration: defaults, YAML loading, validation, echoing.

Every module default is representable here and overridable from a YAML
file; unknown keys and out-of-range values are rejected with their full
key path. The effective configuration is echoed into the run's output
directory for provenance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .kinematics import RobotModel
from .ppo import PPOSettings
from .simulation import SimParams
from .terrain import KINDS


class ConfigError(ValueError):
    pass


@dataclass
class CommandSettings:
    vx_range: tuple[float, float] = (-1.0, 1.0)
    vy_range: tuple[float, float] = (-1.0, 1.0)
    yaw_range: tuple[float, float] = (-1.2, 1.2)
    zero_probability: float = 0.1
    resample_mid_episode: bool = False


@dataclass
class CurriculumSettings:
    initial_factor: float = 0.3
    convergence_rate: float = 0.98
    particles_per_kind: int = 50
    traversal_threshold_m: float = 4.0


@dataclass
class NoiseSettings:
    z7: float = 0.1
    cell_offset_scale: float = 0.1


@dataclass
class TeacherSettings:
    num_envs: int = 1000
    horizon: int = 250
    iterations: int = 1500
    terrain_mode: str = "adaptive"  # "flat" or "adaptive"
    terrain_kinds: tuple[str, ...] = KINDS
    envs_per_patch: int = 8
    curriculum_every: int = 20
    checkpoint_every: int = 200


@dataclass
class StudentSettings:
    num_envs: int = 300
    horizon: int = 400
    epochs: int = 120
    learning_rate: float = 5.0e-4
    tbptt_steps: int = 10
    update_epochs: int = 2
    recon_weight: float = 0.5
    gated: bool = True
    # when False the run stays on flat terrain with zero noise curriculum
    # (sanity/debugging mode); normal training follows the epoch schedule
    follow_schedule: bool = True
    terrain_kinds: tuple[str, ...] = KINDS
    envs_per_patch: int = 8
    checkpoint_every: int = 50
    max_grad_norm: float = 1.0


@dataclass
class EvalSettings:
    trials: int = 100
    step_heights: tuple[float, ...] = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    step_command_speed: float = 0.8
    step_window_s: float = 5.0
    grid_trials: int = 30
    grid_size: int = 11
    grid_command_speed: float = 0.7
    grid_window_s: float = 10.0
    traversal_threshold_m: float = 4.0
    action_diff_steps: int = 300
    action_diff_draws: int = 100


@dataclass
class ExperimentConfig:
    seed: int = 0
    robot: RobotModel = field(default_factory=RobotModel)
    sim: SimParams = field(default_factory=SimParams)
    commands: CommandSettings = field(default_factory=CommandSettings)
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    curriculum: CurriculumSettings = field(default_factory=CurriculumSettings)
    ppo: PPOSettings = field(default_factory=PPOSettings)
    teacher: TeacherSettings = field(default_factory=TeacherSettings)
    student: StudentSettings = field(default_factory=StudentSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)


def _in_range(lo, hi, lo_open=False, hi_open=False):
    def check(v):
        if lo_open and not v > lo:
            return f"must be > {lo}"
        if not lo_open and not v >= lo:
            return f"must be >= {lo}"
        if hi is not None:
            if hi_open and not v < hi:
                return f"must be < {hi}"
            if not hi_open and not v <= hi:
                return f"must be <= {hi}"
        return None

    return check


_VALIDATORS = {
    "ppo.learning_rate": _in_range(0.0, None, lo_open=True),
    "ppo.lr_decay": _in_range(0.0, 1.0, lo_open=True),
    "ppo.discount": _in_range(0.0, 1.0, lo_open=True),
    "ppo.epochs": _in_range(1, None),
    "ppo.gae_lambda": _in_range(0.0, 1.0),
    "ppo.clip_ratio": _in_range(0.0, 1.0, lo_open=True),
    "ppo.entropy_coef": _in_range(0.0, None),
    "ppo.minibatch_size": _in_range(1, None),
    "commands.zero_probability": _in_range(0.0, 1.0),
    "curriculum.initial_factor": _in_range(0.0, 1.0, lo_open=True),
    "curriculum.convergence_rate": _in_range(0.0, 1.0, lo_open=True, hi_open=True),
    "curriculum.particles_per_kind": _in_range(1, None),
    "noise.z7": _in_range(0.0, None),
    "noise.cell_offset_scale": _in_range(0.0, None),
    "student.tbptt_steps": _in_range(1, None),
    "student.update_epochs": _in_range(1, None),
    "student.recon_weight": _in_range(0.0, None),
    "student.learning_rate": _in_range(0.0, None, lo_open=True),
    "teacher.num_envs": _in_range(1, None),
    "teacher.horizon": _in_range(1, None),
    "student.num_envs": _in_range(1, None),
    "student.horizon": _in_range(1, None),
    "eval.trials": _in_range(1, None),
    "robot.kp": _in_range(0.0, None),
    "robot.kd": _in_range(0.0, None),
    "robot.torque_limit": _in_range(0.0, None, lo_open=True),
    "sim.control_dt": _in_range(0.0, None, lo_open=True),
    "sim.physics_dt": _in_range(0.0, None, lo_open=True),
    "sim.low_friction_prob": _in_range(0.0, 1.0),
}


def _set_fields(obj, data: dict, prefix: str):
    valid = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in valid:
            raise ConfigError(f"{path}: unknown key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            _set_fields(current, value, path)
            continue
        if isinstance(current, tuple) and isinstance(value, (list, tuple)):
            value = tuple(value)
        if isinstance(current, np.ndarray):
            value = np.asarray(value, dtype=np.float64)
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        elif isinstance(current, int) and not isinstance(current, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
                raise ConfigError(f"{path}: expected an integer, got {value!r}")
            value = int(value)
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{path}: expected a number, got {value!r}")
            value = float(value)
        elif isinstance(current, str) and not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        object.__setattr__(obj, key, value) if _frozen(obj) else setattr(obj, key, value)
        check = _VALIDATORS.get(path)
        if check is not None and not isinstance(value, (tuple, np.ndarray)):
            msg = check(value)
            if msg:
                raise ConfigError(f"{path}: {msg}")


def _frozen(obj) -> bool:
    return getattr(type(obj), "__dataclass_params__").frozen


def validate(cfg: ExperimentConfig) -> None:
    for section_name in ("teacher", "student"):
        section = getattr(cfg, section_name)
        for kind in section.terrain_kinds:
            if kind not in KINDS:
                raise ConfigError(f"{section_name}.terrain_kinds: unknown kind {kind!r}")
    if cfg.teacher.terrain_mode not in ("flat", "adaptive"):
        raise ConfigError("teacher.terrain_mode: must be 'flat' or 'adaptive'")


def from_dict(data: dict | None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if data:
        if not isinstance(data, dict):
            raise ConfigError("top level of the config must be a mapping")
        _set_fields(cfg, data, "")
    validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load a YAML config; an empty or missing file yields all defaults."""
    if path is None:
        return from_dict(None)
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    return from_dict(data)


def to_dict(cfg) -> dict:
    """Plain-type dict of the full configuration (for echoing)."""
    if isinstance(cfg, RobotModel):
        return cfg.to_dict()
    if dataclasses.is_dataclass(cfg):
        return {f.name: to_dict(getattr(cfg, f.name)) for f in dataclasses.fields(cfg)}
    if isinstance(cfg, np.ndarray):
        return cfg.tolist()
    if isinstance(cfg, tuple):
        return list(cfg)
    return cfg


def echo_config(cfg: ExperimentConfig, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.yaml"
    path.write_text(yaml.safe_dump(to_dict(cfg), sort_keys=False))
    return path

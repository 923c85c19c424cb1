"""Robot geometry, the periodic foot trajectory, and analytic leg kinematics.

Legs are ordered LF, RF, LH, RH. Each leg has three joints
(hip roll, hip pitch, knee pitch); joint i of leg l sits at index 3*l + i
in the 12-vector. The knee-backward branch is fixed for every leg, so IK
is single-valued over the reachable workspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

NUM_LEGS = 4
NUM_JOINTS = 12
LEG_NAMES = ("LF", "RF", "LH", "RH")
SWING_HEIGHT = 0.2


def _default_hip_offsets() -> np.ndarray:
    return np.array(
        [
            [0.36, 0.21, 0.0],
            [0.36, -0.21, 0.0],
            [-0.36, 0.21, 0.0],
            [-0.36, -0.21, 0.0],
        ]
    )


def _default_lateral() -> np.ndarray:
    return np.array([0.11, -0.11, 0.11, -0.11])


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Kinematic and actuation parameters of the simplified quadruped."""

    base_mass: float = 22.0
    base_inertia: tuple[float, float, float] = (0.4, 1.2, 1.4)
    hip_offsets: np.ndarray = field(default_factory=_default_hip_offsets)
    hip_lateral: np.ndarray = field(default_factory=_default_lateral)
    upper_length: float = 0.28
    lower_length: float = 0.31
    stance_depth: float = 0.50
    kp: float = 80.0
    kd: float = 2.0
    torque_limit: float = 80.0
    joint_inertia: float = 0.08
    knee_margin: float = 0.4

    def __post_init__(self):
        if self.upper_length <= 0 or self.lower_length <= 0:
            raise ValueError("link lengths must be positive")
        if self.stance_depth >= self.upper_length + self.lower_length:
            raise ValueError("nominal stance is outside the leg workspace")

    @cached_property
    def nominal_foot_positions(self) -> np.ndarray:
        """Default-stance foot positions in the base frame, one row per leg."""
        feet = self.hip_offsets.copy()
        feet[:, 1] += self.hip_lateral
        feet[:, 2] -= self.stance_depth
        return feet

    @cached_property
    def default_joint_positions(self) -> np.ndarray:
        q, clamped = leg_ik(self.nominal_foot_positions[None, :, :], self)
        assert not clamped.any()
        return q[0]

    @cached_property
    def knee_thresholds(self) -> np.ndarray:
        """Knee angles beyond which the joint-constraint penalty applies."""
        knees = self.default_joint_positions.reshape(NUM_LEGS, 3)[:, 2]
        return knees + self.knee_margin

    def to_dict(self) -> dict:
        return {
            "base_mass": self.base_mass,
            "base_inertia": list(self.base_inertia),
            "hip_offsets": self.hip_offsets.tolist(),
            "hip_lateral": self.hip_lateral.tolist(),
            "upper_length": self.upper_length,
            "lower_length": self.lower_length,
            "stance_depth": self.stance_depth,
            "kp": self.kp,
            "kd": self.kd,
            "torque_limit": self.torque_limit,
            "joint_inertia": self.joint_inertia,
            "knee_margin": self.knee_margin,
        }

    @staticmethod
    def from_dict(d: dict) -> "RobotModel":
        d = dict(d)
        if "hip_offsets" in d:
            d["hip_offsets"] = np.asarray(d["hip_offsets"], dtype=np.float64)
        if "hip_lateral" in d:
            d["hip_lateral"] = np.asarray(d["hip_lateral"], dtype=np.float64)
        if "base_inertia" in d:
            d["base_inertia"] = tuple(d["base_inertia"])
        return RobotModel(**d)


def swing_profile(phase: np.ndarray) -> np.ndarray:
    """Vertical offset of the nominal trajectory as a function of phase.

    Two cubic Hermite arcs lift the foot by SWING_HEIGHT during the swing
    half of the cycle and return it; the stance half stays at zero. Flat
    tangents at 0, pi/2 and pi make the profile C1 at the junctions.
    """
    phase = np.mod(phase, 2.0 * np.pi)
    up = phase <= np.pi / 2
    down = (phase > np.pi / 2) & (phase <= np.pi)
    t_up = 2.0 * phase / np.pi
    t_dn = 2.0 * phase / np.pi - 1.0
    z = np.zeros_like(phase)
    z = np.where(up, SWING_HEIGHT * (-2.0 * t_up**3 + 3.0 * t_up**2), z)
    z = np.where(down, SWING_HEIGHT * (2.0 * t_dn**3 - 3.0 * t_dn**2 + 1.0), z)
    return z


def foot_targets(phases: np.ndarray, model: RobotModel) -> np.ndarray:
    """Nominal foot targets in the base frame for phases of shape (..., 4)."""
    phases = np.asarray(phases, dtype=np.float64)
    targets = np.broadcast_to(model.nominal_foot_positions, phases.shape + (3,)).copy()
    targets[..., 2] += swing_profile(phases)
    return targets


def foot_target(phase: float, leg: int, model: RobotModel) -> np.ndarray:
    """Single-leg convenience wrapper around :func:`foot_targets`."""
    p = model.nominal_foot_positions[leg].copy()
    p[2] += float(swing_profile(np.asarray(phase)))
    return p


def leg_fk(q: np.ndarray, model: RobotModel) -> np.ndarray:
    """Foot positions in the base frame for joint vectors of shape (..., 12)."""
    q = np.asarray(q, dtype=np.float64)
    ql = q.reshape(q.shape[:-1] + (NUM_LEGS, 3))
    q1, q2, q3 = ql[..., 0], ql[..., 1], ql[..., 2]
    l1, l2 = model.upper_length, model.lower_length
    px = -l1 * np.sin(q2) - l2 * np.sin(q2 + q3)
    pz = -l1 * np.cos(q2) - l2 * np.cos(q2 + q3)
    dy = model.hip_lateral
    c1, s1 = np.cos(q1), np.sin(q1)
    py_r = dy * c1 - pz * s1
    pz_r = dy * s1 + pz * c1
    feet = np.stack([px, py_r, pz_r], axis=-1)
    return feet + model.hip_offsets


def knee_fk(q: np.ndarray, model: RobotModel) -> np.ndarray:
    """Knee positions in the base frame, same batching as :func:`leg_fk`."""
    q = np.asarray(q, dtype=np.float64)
    ql = q.reshape(q.shape[:-1] + (NUM_LEGS, 3))
    q1, q2 = ql[..., 0], ql[..., 1]
    l1 = model.upper_length
    px = -l1 * np.sin(q2)
    pz = -l1 * np.cos(q2)
    dy = model.hip_lateral
    c1, s1 = np.cos(q1), np.sin(q1)
    knees = np.stack([px, dy * c1 - pz * s1, dy * s1 + pz * c1], axis=-1)
    return knees + model.hip_offsets


def leg_ik(feet: np.ndarray, model: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    """Joint angles reaching base-frame foot targets of shape (..., 4, 3).

    Unreachable targets are clamped to the nearest workspace point and
    flagged. Returns (q of shape (..., 12), clamped of shape (..., 4)).
    """
    feet = np.asarray(feet, dtype=np.float64)
    rel = feet - model.hip_offsets
    px, py, pz = rel[..., 0], rel[..., 1], rel[..., 2]
    dy = np.broadcast_to(model.hip_lateral, px.shape)
    l1, l2 = model.upper_length, model.lower_length

    r2 = py**2 + pz**2
    min_r2 = dy**2 + 1e-10
    clamped = r2 < min_r2
    r2 = np.maximum(r2, min_r2)
    lateral = np.sqrt(r2 - dy**2)
    q1 = np.arctan2(py, -pz) - np.arctan2(dy, lateral)

    d2 = px**2 + lateral**2
    d = np.sqrt(d2)
    d_max = l1 + l2 - 1e-7
    d_min = abs(l1 - l2) + 1e-7
    clamped = clamped | (d > d_max) | (d < d_min)
    d = np.clip(d, d_min, d_max)

    cos_knee = (l1**2 + l2**2 - d**2) / (2.0 * l1 * l2)
    q3 = -(np.pi - np.arccos(np.clip(cos_knee, -1.0, 1.0)))
    q2 = np.arctan2(-px, lateral) - np.arctan2(l2 * np.sin(q3), l1 + l2 * np.cos(q3))

    q = np.stack([q1, q2, q3], axis=-1)
    return q.reshape(q.shape[:-2] + (NUM_JOINTS,)), clamped

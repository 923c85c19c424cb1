"""Reward terms and their weighted sum.

All terms are stateless pure functions over batched arrays. Velocity
terms live in (0, 1]; every other term is a penalty <= 0. The curriculum
factor c_k scales the collision, joint-motion, smoothness, torque and
slip penalties only.

Unit conventions: joint acceleration and target-smoothness differences
are per-control-step finite differences (no division by dt), which keeps
them commensurate with the published term weights.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .kinematics import NUM_LEGS
from .perception import EXTERO_DIM, SAMPLES_PER_FOOT
from .rotations import quat_rotate_inverse
from .simulation import SimState

KNEE_INDICES = (2, 5, 8, 11)

WEIGHTS = {
    "r_lv": 0.75,
    "r_av": 0.75,
    "r_lvo": 0.75,
    "r_b": 1.0,
    "r_fc": 0.003,
    "r_co": 0.1,
    "r_j": 0.001,
    "r_jc": 0.08,
    "r_s": 0.003,
    "r_tau": 1.0e-6,
    "r_slip": 0.003,
}

CLEARANCE_THRESHOLD = -0.2


@dataclass
class RewardBreakdown:
    r_lv: np.ndarray
    r_av: np.ndarray
    r_lvo: np.ndarray
    r_b: np.ndarray
    r_fc: np.ndarray
    r_co: np.ndarray
    r_j: np.ndarray
    r_jc: np.ndarray
    r_s: np.ndarray
    r_tau: np.ndarray
    r_slip: np.ndarray
    c_k: float = 1.0

    TERM_NAMES = ("r_lv", "r_av", "r_lvo", "r_b", "r_fc", "r_co", "r_j", "r_jc", "r_s", "r_tau", "r_slip")

    def terms(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TERM_NAMES}

    @property
    def total(self) -> np.ndarray:
        return total(self)


def total(breakdown: RewardBreakdown) -> np.ndarray:
    out = 0.0
    for name in RewardBreakdown.TERM_NAMES:
        out = out + WEIGHTS[name] * getattr(breakdown, name)
    return out


def velocity_rewards(v_des: np.ndarray, v: np.ndarray, w_des: np.ndarray, w_z: np.ndarray):
    """Linear, angular and orthogonal velocity rewards.

    Commands may have any magnitude: the unit command direction is used
    in projections and the magnitude as the tracking threshold.
    """
    v_des = np.atleast_2d(np.asarray(v_des, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    w_des = np.atleast_1d(np.asarray(w_des, dtype=np.float64))
    w_z = np.atleast_1d(np.asarray(w_z, dtype=np.float64))

    mag = np.linalg.norm(v_des, axis=-1)
    has_cmd = mag > 1e-9
    unit = np.where(has_cmd[:, None], v_des / np.maximum(mag, 1e-9)[:, None], 0.0)
    proj = np.einsum("nk,nk->n", unit, v)

    r_lv = np.where(
        has_cmd,
        np.where(proj > mag, 1.0, np.exp(-((proj - mag) ** 2))),
        np.exp(-np.einsum("nk,nk->n", v, v)),
    )

    w_mag = np.abs(w_des)
    has_w = w_mag > 1e-9
    w_proj = np.sign(w_des) * w_z
    r_av = np.where(
        has_w,
        np.where(w_proj > w_mag, 1.0, np.exp(-((w_proj - w_mag) ** 2))),
        np.exp(-(w_z**2)),
    )

    v_o = np.where(has_cmd[:, None], v - proj[:, None] * unit, v)
    r_lvo = np.exp(-3.0 * np.einsum("nk,nk->n", v_o, v_o))
    return r_lv, r_av, r_lvo


def body_and_clearance(v_z: np.ndarray, omega_x: np.ndarray, omega_y: np.ndarray,
                       phases: np.ndarray, extero_clean: np.ndarray):
    """Body-motion penalty and per-swing-leg foot-clearance penalty."""
    r_b = -1.25 * np.asarray(v_z) ** 2 - 0.4 * np.abs(omega_x) - 0.4 * np.abs(omega_y)
    phases = np.mod(np.asarray(phases, dtype=np.float64), 2.0 * np.pi)
    swing = phases < np.pi
    samples = np.asarray(extero_clean, dtype=np.float64).reshape(-1, NUM_LEGS, SAMPLES_PER_FOOT)
    too_high = samples.max(axis=-1) < CLEARANCE_THRESHOLD
    r_fc = -(swing & too_high).sum(axis=-1).astype(np.float64)
    return r_b, r_fc


def penalties(
    q: np.ndarray,
    dq: np.ndarray,
    ddq: np.ndarray,
    knee_thresholds: np.ndarray,
    target_t: np.ndarray,
    target_t1: np.ndarray,
    target_t2: np.ndarray,
    tau: np.ndarray,
    contact: np.ndarray,
    foot_vel: np.ndarray,
    collision: np.ndarray,
    c_k: float,
):
    """Collision, joint-motion, joint-constraint, smoothness, torque and slip penalties."""
    c = float(c_k)
    r_co = -c * np.asarray(collision, dtype=np.float64)
    r_j = -c * (0.01 * (dq**2) + ddq**2).sum(axis=-1)

    knees = np.asarray(q)[:, list(KNEE_INDICES)]
    over = knees - np.asarray(knee_thresholds)
    r_jc = -np.where(over > 0.0, over**2, 0.0).sum(axis=-1)

    d1 = target_t - target_t1
    d2 = target_t - 2.0 * target_t1 + target_t2
    r_s = -c * (d1**2 + d2**2).sum(axis=-1)

    r_tau = -c * (np.asarray(tau) ** 2).sum(axis=-1)

    speed2 = (np.asarray(foot_vel) ** 2).sum(axis=-1)
    r_slip = -c * np.where(np.asarray(contact), speed2, 0.0).sum(axis=-1)
    return r_co, r_j, r_jc, r_s, r_tau, r_slip


def compute(
    state: SimState,
    info: dict,
    command: np.ndarray,
    extero_clean: np.ndarray,
    c_k: float,
    knee_thresholds: np.ndarray,
) -> RewardBreakdown:
    """Assemble the breakdown for one post-step state."""
    n = state.num_envs
    command = np.asarray(command, dtype=np.float64).reshape(n, 3)
    lin_b = quat_rotate_inverse(state.base_quat, state.lin_vel)
    r_lv, r_av, r_lvo = velocity_rewards(command[:, :2], lin_b[:, :2], command[:, 2], state.ang_vel[:, 2])
    r_b, r_fc = body_and_clearance(
        lin_b[:, 2], state.ang_vel[:, 0], state.ang_vel[:, 1], state.phases, extero_clean
    )
    ddq = state.dq - state.dq_hist[:, 0, :]
    r_co, r_j, r_jc, r_s, r_tau, r_slip = penalties(
        q=state.q,
        dq=state.dq,
        ddq=ddq,
        knee_thresholds=knee_thresholds,
        target_t=state.target_hist[:, 0, :],
        target_t1=state.target_hist[:, 1, :],
        target_t2=state.target_hist[:, 2, :],
        tau=info["tau"],
        contact=state.contact,
        foot_vel=state.foot_vel,
        collision=info["collision"],
        c_k=c_k,
    )
    return RewardBreakdown(
        r_lv=r_lv, r_av=r_av, r_lvo=r_lvo, r_b=r_b, r_fc=r_fc,
        r_co=r_co, r_j=r_j, r_jc=r_jc, r_s=r_s, r_tau=r_tau, r_slip=r_slip, c_k=float(c_k),
    )

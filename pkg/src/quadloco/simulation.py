"""Simplified quadruped dynamics.

The base is a single rigid body; legs are treated kinematically with
their mass lumped into the base, and each joint integrates second-order
dynamics driven by a torque-limited PD controller. Point feet interact
with the terrain through a spring-damper normal force and stick-slip
Coulomb friction (tangential spring clamped to the friction cone). This
keeps every interface of the full problem - contacts, normals, slip,
torque limits, pushes - at desk scale.

States are batched: every array in :class:`SimState` has a leading
environment axis, and a batch of one reproduces the single-robot API.
Environments in one batch share a terrain patch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from typing import Iterable

import numpy as np

from . import terrain as terrain_mod
from .kinematics import NUM_JOINTS, NUM_LEGS, RobotModel, foot_targets, knee_fk, leg_fk, leg_ik
from .rotations import (
    body_z_world,
    gravity_in_body,
    quat_from_rpy,
    quat_identity,
    quat_integrate,
    quat_rotate,
    quat_rotate_inverse,
)

GRAVITY = 9.81

# Trot initialization: (LF, RF, LH, RH); diagonal pairs half a cycle apart.
DEFAULT_PHASES = np.array([np.pi, 0.0, 0.0, np.pi])

PRIVILEGED_DIM = 50
# Fixed ordering of the privileged vector.
PRIVILEGED_LAYOUT = {
    "contact_states": slice(0, 4),
    "contact_forces": slice(4, 16),
    "contact_normals": slice(16, 28),
    "friction_coefficients": slice(28, 32),
    "thigh_shank_contact": slice(32, 40),
    "external_wrench": slice(40, 46),
    "airtime": slice(46, 50),
}


@dataclass
class SimParams:
    """Physics and episode constants; defaults are engineering choices."""

    control_dt: float = 0.02
    physics_dt: float = 0.0025
    base_phase_rate: float = 2.0 * np.pi * 1.25 * 0.02  # rad advanced per control step
    phase_action_bound: float = 0.6
    residual_action_bound: float = 0.5
    # scaling from raw policy outputs to physical actions, applied by the
    # environment layer so exploration noise stays survivable
    phase_action_scale: float = 0.25
    residual_action_scale: float = 0.25

    contact_kn: float = 16000.0
    contact_cn: float = 400.0
    contact_kt: float = 6000.0
    contact_ct: float = 120.0
    penetration_clamp: float = 0.05
    lin_damping: float = 1.0
    ang_damping: float = 0.1

    tilt_limit_cos: float = 0.5  # 60 degrees
    torque_margin: float = 1.5
    body_clearance: float = 0.08
    body_half_extent: tuple[float, float] = (0.42, 0.16)
    thigh_radius: float = 0.04
    shank_radius: float = 0.03

    episode_length_s: float = 10.0
    rand_mass: float = 0.2
    rand_joint_pos: float = 0.2
    rand_joint_vel: float = 0.5
    rand_orientation: float = 0.1
    rand_lin_vel: float = 0.3
    rand_ang_vel: float = 0.2
    push_force: float = 40.0
    push_torque: float = 8.0
    push_count: int = 3
    push_duration_s: float = 0.4
    low_friction_prob: float = 0.05
    low_friction_mu: float = 0.1
    friction_jitter: float = 0.15

    @property
    def substeps(self) -> int:
        return max(1, int(round(self.control_dt / self.physics_dt)))

    @property
    def action_scale(self) -> np.ndarray:
        return np.concatenate([
            np.full(4, self.phase_action_scale),
            np.full(12, self.residual_action_scale),
        ])

    @property
    def max_episode_steps(self) -> int:
        return int(round(self.episode_length_s / self.control_dt))


@dataclass
class SimState:
    """Batched simulator state; leading axis is the environment."""

    base_pos: np.ndarray
    base_quat: np.ndarray
    lin_vel: np.ndarray  # world frame
    ang_vel: np.ndarray  # body frame
    q: np.ndarray
    dq: np.ndarray
    phases: np.ndarray
    last_phase_offsets: np.ndarray
    q_hist: np.ndarray  # (n, 3, 12), most recent first
    dq_hist: np.ndarray  # (n, 2, 12)
    target_hist: np.ndarray  # (n, 3, 12): current, t-1, t-2
    contact: np.ndarray
    contact_force: np.ndarray
    contact_normal: np.ndarray
    foot_friction: np.ndarray
    foot_vel: np.ndarray
    airtime: np.ndarray
    thigh_contact: np.ndarray
    shank_contact: np.ndarray
    anchor: np.ndarray
    anchor_active: np.ndarray
    prev_feet: np.ndarray
    ext_force: np.ndarray
    ext_torque: np.ndarray
    push_start: np.ndarray
    push_end: np.ndarray
    push_force: np.ndarray
    push_torque: np.ndarray
    episode_friction: np.ndarray
    mass_scale: np.ndarray
    step_count: np.ndarray

    @property
    def num_envs(self) -> int:
        return self.base_pos.shape[0]

    def copy(self) -> "SimState":
        return SimState(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    def quaternion_errors(self) -> np.ndarray:
        return np.abs(np.linalg.norm(self.base_quat, axis=-1) - 1.0)


@dataclass
class TerminationInfo:
    body_contact: np.ndarray
    tilt_exceeded: np.ndarray
    torque_limit_exceeded: np.ndarray
    nonfinite: np.ndarray

    @property
    def any(self) -> np.ndarray:
        return self.body_contact | self.tilt_exceeded | self.torque_limit_exceeded | self.nonfinite


def initial_state(num_envs: int, model: RobotModel, params: SimParams | None = None) -> SimState:
    """Nominal standing state on flat ground at the origin."""
    n = num_envs
    k = (params or SimParams()).push_count
    q0 = np.tile(model.default_joint_positions, (n, 1))
    state = SimState(
        base_pos=np.tile([0.0, 0.0, model.stance_depth], (n, 1)),
        base_quat=quat_identity(n),
        lin_vel=np.zeros((n, 3)),
        ang_vel=np.zeros((n, 3)),
        q=q0.copy(),
        dq=np.zeros((n, NUM_JOINTS)),
        phases=np.tile(DEFAULT_PHASES, (n, 1)),
        last_phase_offsets=np.zeros((n, NUM_LEGS)),
        q_hist=np.tile(q0[:, None, :], (1, 3, 1)),
        dq_hist=np.zeros((n, 2, NUM_JOINTS)),
        target_hist=np.tile(q0[:, None, :], (1, 3, 1)),
        contact=np.zeros((n, NUM_LEGS), dtype=bool),
        contact_force=np.zeros((n, NUM_LEGS, 3)),
        contact_normal=np.zeros((n, NUM_LEGS, 3)),
        foot_friction=np.full((n, NUM_LEGS), terrain_mod.DEFAULT_FRICTION),
        foot_vel=np.zeros((n, NUM_LEGS, 3)),
        airtime=np.zeros((n, NUM_LEGS)),
        thigh_contact=np.zeros((n, NUM_LEGS), dtype=bool),
        shank_contact=np.zeros((n, NUM_LEGS), dtype=bool),
        anchor=np.zeros((n, NUM_LEGS, 2)),
        anchor_active=np.zeros((n, NUM_LEGS), dtype=bool),
        prev_feet=np.zeros((n, NUM_LEGS, 3)),
        ext_force=np.zeros((n, 3)),
        ext_torque=np.zeros((n, 3)),
        push_start=np.full((n, k), -1.0),
        push_end=np.full((n, k), -1.0),
        push_force=np.zeros((n, k, 3)),
        push_torque=np.zeros((n, k, 3)),
        episode_friction=np.full((n,), terrain_mod.DEFAULT_FRICTION),
        mass_scale=np.ones((n,)),
        step_count=np.zeros((n,), dtype=np.int64),
    )
    feet_b = leg_fk(state.q, model)
    state.prev_feet = state.base_pos[:, None, :] + feet_b
    return state


def feet_world(state: SimState, model: RobotModel) -> np.ndarray:
    feet_b = leg_fk(state.q, model)
    return state.base_pos[:, None, :] + quat_rotate(state.base_quat[:, None, :], feet_b)


def reset_envs(
    state: SimState,
    idx: np.ndarray,
    rng: np.random.Generator,
    model: RobotModel,
    params: SimParams,
    patch: terrain_mod.TerrainPatch,
    c_k: float,
    spawn_xy: tuple[float, float] = (0.0, 0.0),
) -> SimState:
    """Re-initialize the selected environments with curriculum-scaled randomization.

    With ``c_k`` = 0 every perturbation vanishes and the returned rows equal
    the nominal initial state for the patch.
    """
    idx = np.asarray(idx, dtype=np.int64)
    m = len(idx)
    if m == 0:
        return state
    c = float(c_k)

    q0 = model.default_joint_positions + c * rng.uniform(-params.rand_joint_pos, params.rand_joint_pos, (m, NUM_JOINTS))
    dq0 = c * rng.uniform(-params.rand_joint_vel, params.rand_joint_vel, (m, NUM_JOINTS))
    rpy = c * rng.uniform(-params.rand_orientation, params.rand_orientation, (m, 3))
    quat = quat_from_rpy(rpy[:, 0], rpy[:, 1], rpy[:, 2])
    lin = c * rng.uniform(-params.rand_lin_vel, params.rand_lin_vel, (m, 3))
    ang = c * rng.uniform(-params.rand_ang_vel, params.rand_ang_vel, (m, 3))

    feet_nominal = model.nominal_foot_positions
    ground = terrain_mod.height_at(
        patch,
        spawn_xy[0] + np.broadcast_to(feet_nominal[:, 0], (m, NUM_LEGS)),
        spawn_xy[1] + np.broadcast_to(feet_nominal[:, 1], (m, NUM_LEGS)),
    ).max(axis=1)
    base_z = ground + model.stance_depth

    state.base_pos[idx] = np.stack(
        [np.full(m, spawn_xy[0]), np.full(m, spawn_xy[1]), base_z], axis=-1
    )
    state.base_quat[idx] = quat
    state.lin_vel[idx] = lin
    state.ang_vel[idx] = ang
    state.q[idx] = q0
    state.dq[idx] = dq0
    state.phases[idx] = DEFAULT_PHASES
    state.last_phase_offsets[idx] = 0.0
    state.q_hist[idx] = q0[:, None, :]
    state.dq_hist[idx] = dq0[:, None, :]
    state.target_hist[idx] = q0[:, None, :]
    state.contact[idx] = False
    state.contact_force[idx] = 0.0
    state.contact_normal[idx] = 0.0
    state.foot_vel[idx] = 0.0
    state.airtime[idx] = 0.0
    state.thigh_contact[idx] = False
    state.shank_contact[idx] = False
    state.anchor[idx] = 0.0
    state.anchor_active[idx] = False
    state.ext_force[idx] = 0.0
    state.ext_torque[idx] = 0.0
    state.step_count[idx] = 0
    state.mass_scale[idx] = 1.0 + c * rng.uniform(-params.rand_mass, params.rand_mass, m)

    mu = terrain_mod.DEFAULT_FRICTION + c * rng.uniform(-params.friction_jitter, params.friction_jitter, m)
    slippery = rng.uniform(size=m) < params.low_friction_prob
    mu = np.where(slippery, terrain_mod.DEFAULT_FRICTION - c * (terrain_mod.DEFAULT_FRICTION - params.low_friction_mu), mu)
    state.episode_friction[idx] = mu

    # schedule pushes up-front so stepping stays deterministic
    k = params.push_count
    if state.push_start.shape[1] != k:
        raise ValueError("state push buffers do not match params.push_count; rebuild the state")
    max_steps = params.max_episode_steps
    starts = rng.uniform(0.1 * max_steps, 0.9 * max_steps, (m, k))
    duration = params.push_duration_s / params.control_dt
    direction = rng.normal(size=(m, k, 3))
    direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
    fmag = c * rng.uniform(0.0, params.push_force, (m, k, 1))
    tdir = rng.normal(size=(m, k, 3))
    tdir /= np.linalg.norm(tdir, axis=-1, keepdims=True)
    tmag = c * rng.uniform(0.0, params.push_torque, (m, k, 1))
    state.push_start[idx] = starts
    state.push_end[idx] = starts + duration
    state.push_force[idx] = direction * fmag
    state.push_torque[idx] = tdir * tmag

    feet_b = leg_fk(state.q[idx], model)
    state.prev_feet[idx] = state.base_pos[idx][:, None, :] + quat_rotate(state.base_quat[idx][:, None, :], feet_b)
    return state


def randomize_episode(
    state: SimState,
    rng: np.random.Generator,
    model: RobotModel | None = None,
    params: SimParams | None = None,
    patch: terrain_mod.TerrainPatch | None = None,
    c_k: float = 1.0,
) -> SimState:
    """Randomize every environment in ``state`` for a fresh episode."""
    model = model or RobotModel()
    params = params or SimParams()
    patch = patch or terrain_mod.flat_patch()
    return reset_envs(state, np.arange(state.num_envs), rng, model, params, patch, c_k)


def _box_contacts(boxes: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deepest box penetration per point.

    Returns (penetration (n,), normal (n, 3)); penetration <= 0 means no
    box contact. Pushout is along the face of minimum penetration.
    """
    n_pts = points.shape[0]
    best_pen = np.full(n_pts, -np.inf)
    best_normal = np.zeros((n_pts, 3))
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    for cx, cy, yaw, hx, hy, zb, zt in boxes:
        c, s = np.cos(yaw), np.sin(yaw)
        lx = c * (x - cx) + s * (y - cy)
        ly = -s * (x - cx) + c * (y - cy)
        pens = np.stack(
            [hx - np.abs(lx), hy - np.abs(ly), zt - z, z - zb], axis=-1
        )
        inside = pens.min(axis=-1) > 0.0
        if not inside.any():
            continue
        face = np.argmin(pens, axis=-1)
        pen = pens[np.arange(n_pts), face]
        sign_x = np.where(lx >= 0, 1.0, -1.0)
        sign_y = np.where(ly >= 0, 1.0, -1.0)
        normals = np.zeros((n_pts, 3))
        normals[face == 0] = np.stack([sign_x * c, sign_x * s, np.zeros(n_pts)], axis=-1)[face == 0]
        normals[face == 1] = np.stack([-sign_y * s, sign_y * c, np.zeros(n_pts)], axis=-1)[face == 1]
        normals[face == 2] = [0.0, 0.0, 1.0]
        normals[face == 3] = [0.0, 0.0, -1.0]
        better = inside & (pen > best_pen)
        best_pen = np.where(better, pen, best_pen)
        best_normal = np.where(better[:, None], normals, best_normal)
    return best_pen, best_normal


def _foot_contact_forces(
    state: SimState,
    feet: np.ndarray,
    foot_vel: np.ndarray,
    patch: terrain_mod.TerrainPatch,
    params: SimParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Contact response for every foot; also updates friction anchors."""
    n = state.num_envs
    flat_feet = feet.reshape(-1, 3)
    hf = patch.heightfield
    nx = hf.shape[0] - 1
    gx = np.clip(((flat_feet[:, 0] - patch.origin[0]) / patch.resolution).astype(np.int64), 0, nx)
    gy = np.clip(((flat_feet[:, 1] - patch.origin[1]) / patch.resolution).astype(np.int64), 0, nx)
    hf_only = hf[gx, gy]
    pen_hf = hf_only - flat_feet[:, 2]
    # raster-gradient normal (boxes supply their own face normals)
    dhdx = (hf[np.minimum(gx + 1, nx), gy] - hf[np.maximum(gx - 1, 0), gy]) / (2 * patch.resolution)
    dhdy = (hf[gx, np.minimum(gy + 1, nx)] - hf[gx, np.maximum(gy - 1, 0)]) / (2 * patch.resolution)
    normal_hf = np.stack([-dhdx, -dhdy, np.ones_like(dhdx)], axis=-1)
    normal_hf /= np.linalg.norm(normal_hf, axis=-1, keepdims=True)

    if len(patch.boxes):
        pen_box, normal_box = _box_contacts(patch.boxes, flat_feet)
    else:
        pen_box = np.full(flat_feet.shape[0], -np.inf)
        normal_box = np.zeros_like(flat_feet)

    use_box = pen_box > np.maximum(pen_hf, 0.0)
    pen = np.where(use_box, pen_box, pen_hf)
    normal = np.where(use_box[:, None], normal_box, normal_hf)
    in_contact = pen > 0.0
    pen = np.clip(pen, 0.0, params.penetration_clamp)

    pen = pen.reshape(n, NUM_LEGS)
    normal = normal.reshape(n, NUM_LEGS, 3)
    in_contact = in_contact.reshape(n, NUM_LEGS)

    mu = terrain_mod.friction_at(
        patch, feet[..., 0].ravel(), feet[..., 1].ravel(), default=1.0
    ).reshape(n, NUM_LEGS)
    mu = np.minimum(mu, state.episode_friction[:, None])

    vn = np.einsum("nlk,nlk->nl", foot_vel, normal)
    fn_mag = np.where(in_contact, np.maximum(0.0, params.contact_kn * pen - params.contact_cn * vn), 0.0)
    force = fn_mag[..., None] * normal

    # friction: anchor spring in the ground plane for top-facing contacts,
    # plain damped Coulomb sliding for side contacts
    top = in_contact & (normal[..., 2] > 0.7)
    new_anchor = top & ~state.anchor_active
    state.anchor[new_anchor] = feet[new_anchor][:, :2]
    state.anchor_active = top

    ft = np.zeros((n, NUM_LEGS, 2))
    ft[top] = (
        -params.contact_kt * (feet[top][:, :2] - state.anchor[top])
        - params.contact_ct * foot_vel[top][:, :2]
    )
    limit = mu * fn_mag
    ft_mag = np.linalg.norm(ft, axis=-1)
    slipping = top & (ft_mag > limit) & (ft_mag > 0)
    scale = np.where(slipping, np.where(ft_mag > 0, limit / np.maximum(ft_mag, 1e-12), 1.0), 1.0)
    ft *= scale[..., None]
    # let the anchor trail the foot while sliding so the spring stays on the cone
    state.anchor[slipping] = feet[slipping][:, :2] + ft[slipping] / params.contact_kt

    side = in_contact & ~top
    if side.any():
        vt = foot_vel[side] - vn[side][:, None] * normal[side]
        vt_mag = np.linalg.norm(vt, axis=-1)
        f_side = -np.minimum(params.contact_ct * vt_mag, mu[side] * fn_mag[side])
        force[side] += np.where(vt_mag[:, None] > 1e-9, f_side[:, None] * vt / np.maximum(vt_mag[:, None], 1e-12), 0.0)

    force[..., 0] += np.where(top, ft[..., 0], 0.0)
    force[..., 1] += np.where(top, ft[..., 1], 0.0)

    return force, in_contact, np.where(in_contact[..., None], normal, 0.0), mu


def _link_collisions(state: SimState, feet: np.ndarray, patch: terrain_mod.TerrainPatch,
                     model: RobotModel, params: SimParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thigh contact, shank contact (per leg) and body contact (per env)."""
    n = state.num_envs
    hips_w = state.base_pos[:, None, :] + quat_rotate(state.base_quat[:, None, :], np.broadcast_to(model.hip_offsets, (n, NUM_LEGS, 3)))
    knees_b = knee_fk(state.q, model)
    knees_w = state.base_pos[:, None, :] + quat_rotate(state.base_quat[:, None, :], knees_b)

    def segment_hits(a, b, radius):
        hits = np.zeros((n, NUM_LEGS), dtype=bool)
        for t in (0.3, 0.6, 0.9):
            p = a + t * (b - a)
            h = terrain_mod.height_at(patch, p[..., 0].ravel(), p[..., 1].ravel()).reshape(n, NUM_LEGS)
            hits |= (p[..., 2] - radius) < h
        return hits

    thigh = segment_hits(hips_w, knees_w, params.thigh_radius)
    # sample the upper part of the shank so normal stance keeps clearance
    shank = np.zeros((n, NUM_LEGS), dtype=bool)
    for t in (0.05, 0.3, 0.55):
        p = knees_w + t * (feet - knees_w)
        h = terrain_mod.height_at(patch, p[..., 0].ravel(), p[..., 1].ravel()).reshape(n, NUM_LEGS)
        shank |= (p[..., 2] - params.shank_radius) < h

    hx, hy = params.body_half_extent
    corners = np.array(
        [[sx * hx, sy * hy, -params.body_clearance] for sx in (-1, 1) for sy in (-1, 1)]
        + [[0.0, 0.0, -params.body_clearance]]
    )
    pts = state.base_pos[:, None, :] + quat_rotate(state.base_quat[:, None, :], np.broadcast_to(corners, (n, len(corners), 3)))
    h = terrain_mod.height_at(patch, pts[..., 0].ravel(), pts[..., 1].ravel()).reshape(n, len(corners))
    body = (pts[..., 2] < h).any(axis=1)
    return thigh, shank, body


def step(
    state: SimState,
    action: np.ndarray,
    patch: terrain_mod.TerrainPatch,
    command: np.ndarray | None = None,
    model: RobotModel | None = None,
    params: SimParams | None = None,
) -> tuple[SimState, TerminationInfo, dict]:
    """Advance one 50 Hz control step.

    ``action`` is (n, 16): four phase offsets then twelve joint-target
    residuals, clipped to the configured bounds. ``command`` is carried in
    the observation pipeline and does not enter the dynamics; it is
    accepted here so callers can treat the simulator as a command-driven
    environment. Returns the successor state, termination flags and an
    info dict with per-step quantities used by rewards and logging.
    """
    model = model or RobotModel()
    params = params or SimParams()
    s = state.copy()
    n = s.num_envs
    act = np.asarray(action, dtype=np.float64).reshape(n, 16)
    dphi = np.clip(act[:, :NUM_LEGS], -params.phase_action_bound, params.phase_action_bound)
    residual = np.clip(act[:, NUM_LEGS:], -params.residual_action_bound, params.residual_action_bound)

    s.last_phase_offsets = dphi
    s.phases = np.mod(s.phases + dphi + params.base_phase_rate, 2.0 * np.pi)

    targets_b = foot_targets(s.phases, model)
    q_nominal, _ = leg_ik(targets_b, model)
    q_target = q_nominal + residual

    s.q_hist = np.concatenate([s.q[:, None, :], s.q_hist[:, :2, :]], axis=1)
    s.dq_hist = np.concatenate([s.dq[:, None, :], s.dq_hist[:, :1, :]], axis=1)
    s.target_hist = np.concatenate([q_target[:, None, :], s.target_hist[:, :2, :]], axis=1)

    active = (s.step_count[:, None] >= s.push_start) & (s.step_count[:, None] < s.push_end)
    s.ext_force = (s.push_force * active[..., None]).sum(axis=1)
    s.ext_torque = (s.push_torque * active[..., None]).sum(axis=1)

    dt = params.physics_dt
    mass = model.base_mass * s.mass_scale
    inertia = np.asarray(model.base_inertia) * s.mass_scale[:, None]
    max_pd = np.zeros(n)
    tau = np.zeros((n, NUM_JOINTS))
    contact_any = np.zeros((n, NUM_LEGS), dtype=bool)

    for _ in range(params.substeps):
        tau_raw = model.kp * (q_target - s.q) - model.kd * s.dq
        max_pd = np.maximum(max_pd, np.abs(tau_raw).max(axis=1))
        tau = np.clip(tau_raw, -model.torque_limit, model.torque_limit)
        s.dq = s.dq + dt * tau / model.joint_inertia
        s.q = s.q + dt * s.dq

        feet_b = leg_fk(s.q, model)
        feet = s.base_pos[:, None, :] + quat_rotate(s.base_quat[:, None, :], feet_b)
        foot_vel = (feet - s.prev_feet) / dt
        s.prev_feet = feet

        force, in_contact, normal, mu = _foot_contact_forces(s, feet, foot_vel, patch, params)
        contact_any |= in_contact

        f_total = force.sum(axis=1)
        f_total[:, 2] -= mass * GRAVITY
        f_total += s.ext_force - params.lin_damping * s.lin_vel
        lever = feet - s.base_pos[:, None, :]
        tau_w = np.cross(lever, force).sum(axis=1) + s.ext_torque
        tau_b = quat_rotate_inverse(s.base_quat, tau_w)
        tau_b -= params.ang_damping * s.ang_vel
        gyro = np.cross(s.ang_vel, inertia * s.ang_vel)
        s.lin_vel = s.lin_vel + dt * f_total / mass[:, None]
        s.ang_vel = s.ang_vel + dt * (tau_b - gyro) / inertia
        s.base_pos = s.base_pos + dt * s.lin_vel
        omega_w = quat_rotate(s.base_quat, s.ang_vel)
        s.base_quat = quat_integrate(s.base_quat, omega_w, dt)

        s.contact = in_contact
        s.contact_force = force
        s.contact_normal = normal
        s.foot_friction = mu
        s.foot_vel = foot_vel
        s.airtime = np.where(in_contact, 0.0, s.airtime + dt)

    # final-state feet, so downstream perception agrees with feet_world(s)
    feet = feet_world(s, model)
    s.thigh_contact, s.shank_contact, body_hit = _link_collisions(s, feet, patch, model, params)

    tilt = body_z_world(s.base_quat)[:, 2] < params.tilt_limit_cos
    torque_exceeded = max_pd > params.torque_margin * model.torque_limit

    finite = (
        np.isfinite(s.q).all(axis=1)
        & np.isfinite(s.dq).all(axis=1)
        & np.isfinite(s.base_pos).all(axis=1)
        & np.isfinite(s.lin_vel).all(axis=1)
        & np.isfinite(s.ang_vel).all(axis=1)
        & np.isfinite(s.base_quat).all(axis=1)
    )
    if not finite.all():
        bad = ~finite
        s.q[bad] = model.default_joint_positions
        s.dq[bad] = 0.0
        s.lin_vel[bad] = 0.0
        s.ang_vel[bad] = 0.0
        s.base_pos[bad] = [0.0, 0.0, model.stance_depth]
        s.base_quat[bad] = [1.0, 0.0, 0.0, 0.0]

    s.step_count = s.step_count + 1
    info = {
        "tau": tau,
        "q_target": q_target,
        "contact_any_substep": contact_any,
        "collision": (s.thigh_contact | s.shank_contact).any(axis=1),
        "max_pd_torque": max_pd,
        "feet": feet,
    }
    term = TerminationInfo(
        body_contact=body_hit,
        tilt_exceeded=tilt,
        torque_limit_exceeded=torque_exceeded,
        nonfinite=~finite,
    )
    return s, term, info


def privileged_state(state: SimState, patch: terrain_mod.TerrainPatch | None = None) -> np.ndarray:
    """Privileged vector (n, 50) in the PRIVILEGED_LAYOUT ordering."""
    n = state.num_envs
    out = np.zeros((n, PRIVILEGED_DIM))
    out[:, PRIVILEGED_LAYOUT["contact_states"]] = state.contact.astype(np.float64)
    out[:, PRIVILEGED_LAYOUT["contact_forces"]] = state.contact_force.reshape(n, -1)
    out[:, PRIVILEGED_LAYOUT["contact_normals"]] = state.contact_normal.reshape(n, -1)
    out[:, PRIVILEGED_LAYOUT["friction_coefficients"]] = state.foot_friction
    thigh_shank = np.concatenate([state.thigh_contact, state.shank_contact], axis=1)
    out[:, PRIVILEGED_LAYOUT["thigh_shank_contact"]] = thigh_shank.astype(np.float64)
    out[:, PRIVILEGED_LAYOUT["external_wrench"]] = np.concatenate([state.ext_force, state.ext_torque], axis=1)
    out[:, PRIVILEGED_LAYOUT["airtime"]] = state.airtime
    return out


def dump_trajectory_csv(path: str, rows: Iterable[dict]) -> None:
    """Per-step CSV dump for debugging and plots."""
    rows = list(rows)
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

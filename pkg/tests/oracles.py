"""Independent reference implementations used to cross-check the package.

Everything here is written as plain scalar Python against the defining
formulas, deliberately sharing no code with the package internals.
"""

from __future__ import annotations

import math

import numpy as np

REWARD_WEIGHTS = {
    "r_lv": 0.75, "r_av": 0.75, "r_lvo": 0.75, "r_b": 1.0, "r_fc": 0.003,
    "r_co": 0.1, "r_j": 0.001, "r_jc": 0.08, "r_s": 0.003, "r_tau": 1.0e-6,
    "r_slip": 0.003,
}


def total_reward(terms: dict[str, float]) -> float:
    return (
        0.75 * (terms["r_lv"] + terms["r_av"] + terms["r_lvo"])
        + terms["r_b"]
        + 0.003 * terms["r_fc"]
        + 0.1 * terms["r_co"]
        + 0.001 * terms["r_j"]
        + 0.08 * terms["r_jc"]
        + 0.003 * terms["r_s"]
        + 1.0e-6 * terms["r_tau"]
        + 0.003 * terms["r_slip"]
    )


def linear_velocity_reward(v_des, v):
    vx, vy = float(v[0]), float(v[1])
    mag = math.hypot(float(v_des[0]), float(v_des[1]))
    if mag == 0.0:
        return math.exp(-(vx * vx + vy * vy))
    ux, uy = v_des[0] / mag, v_des[1] / mag
    proj = ux * vx + uy * vy
    if proj > mag:
        return 1.0
    return math.exp(-((proj - mag) ** 2))


def angular_velocity_reward(w_des, w_z):
    w_des, w_z = float(w_des), float(w_z)
    if w_des == 0.0:
        return math.exp(-(w_z**2))
    proj = math.copysign(1.0, w_des) * w_z
    mag = abs(w_des)
    if proj > mag:
        return 1.0
    return math.exp(-((proj - mag) ** 2))


def orthogonal_velocity_reward(v_des, v):
    mag = math.hypot(float(v_des[0]), float(v_des[1]))
    if mag == 0.0:
        ox, oy = v[0], v[1]
    else:
        ux, uy = v_des[0] / mag, v_des[1] / mag
        proj = ux * v[0] + uy * v[1]
        ox, oy = v[0] - proj * ux, v[1] - proj * uy
    return math.exp(-3.0 * (ox * ox + oy * oy))


def body_motion_reward(v_z, w_x, w_y):
    return -1.25 * v_z**2 - 0.4 * abs(w_x) - 0.4 * abs(w_y)


def foot_clearance_reward(phases, samples_per_leg):
    total = 0.0
    for leg in range(4):
        phase = phases[leg] % (2.0 * math.pi)
        if 0.0 <= phase < math.pi and max(samples_per_leg[leg]) < -0.2:
            total += -1.0
    return total


def collision_reward(any_collision, c_k):
    return -c_k if any_collision else 0.0


def joint_motion_reward(dq, ddq, c_k):
    return -c_k * sum(0.01 * dq[i] ** 2 + ddq[i] ** 2 for i in range(12))


def joint_constraint_reward(q, thresholds):
    total = 0.0
    for idx, th in zip((2, 5, 8, 11), thresholds):
        if q[idx] > th:
            total -= (q[idx] - th) ** 2
    return total


def smoothness_reward(t0, t1, t2, c_k):
    total = 0.0
    for i in range(12):
        total += (t0[i] - t1[i]) ** 2 + (t0[i] - 2 * t1[i] + t2[i]) ** 2
    return -c_k * total


def torque_reward(tau, c_k):
    return -c_k * sum(t * t for t in tau)


def slip_reward(contacts, foot_vels, c_k):
    total = 0.0
    for leg in range(4):
        if contacts[leg]:
            total += sum(v * v for v in foot_vels[leg])
    return -c_k * total


def swing_height(phase):
    """Nominal vertical foot offset from the two cubic arcs."""
    phase = phase % (2.0 * math.pi)
    if phase <= math.pi / 2:
        t = 2.0 * phase / math.pi
        return 0.2 * (-2 * t**3 + 3 * t**2)
    if phase <= math.pi:
        t = 2.0 * phase / math.pi - 1.0
        return 0.2 * (2 * t**3 - 3 * t**2 + 1.0)
    return 0.0


def curriculum_factor(c, d):
    return math.exp(d * math.log(c))


def gae_forward(rewards, values, dones, gamma, lam):
    """Advantage by direct forward summation of discounted TD residuals."""
    T = len(rewards)
    deltas = [
        rewards[t] + gamma * values[t + 1] * (0.0 if dones[t] else 1.0) - values[t]
        for t in range(T)
    ]
    adv = []
    for t in range(T):
        acc = 0.0
        scale = 1.0
        for l in range(t, T):
            acc += scale * deltas[l]
            if dones[l]:
                break
            scale *= gamma * lam
        adv.append(acc)
    return adv


def distill_loss(l_bc, l_re, weight=0.5):
    return l_bc + weight * l_re


def noisy_sample_height(r, theta, foot_xy, height_fn, eps_p, eps_f, w, outlier, cell_offset):
    """One perturbed height sample straight from the defining equations."""
    x_p = foot_xy[0] + r * math.cos(theta) + eps_p[0] + eps_f[0] + w[0]
    y_p = foot_xy[1] + r * math.sin(theta) + eps_p[1] + eps_f[1] + w[1]
    return height_fn(x_p, y_p) + eps_p[2] + eps_f[2] + w[2] + outlier + cell_offset, (x_p, y_p)


def brute_force_height(heightfield, origin, resolution, boxes, x, y):
    """Max over the heightfield cell and every covering box top."""
    n = heightfield.shape[0]
    ix = min(max(int(math.floor((x - origin[0]) / resolution)), 0), n - 1)
    iy = min(max(int(math.floor((y - origin[1]) / resolution)), 0), n - 1)
    best = heightfield[ix, iy]
    for cx, cy, yaw, hx, hy, _zb, zt in boxes:
        c, s = math.cos(yaw), math.sin(yaw)
        lx = c * (x - cx) + s * (y - cy)
        ly = -s * (x - cx) + c * (y - cy)
        if abs(lx) <= hx and abs(ly) <= hy:
            best = max(best, zt)
    return best

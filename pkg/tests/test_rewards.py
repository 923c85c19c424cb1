import numpy as np
import pytest

import oracles
from quadloco.rewards import (
    KNEE_INDICES,
    WEIGHTS,
    RewardBreakdown,
    body_and_clearance,
    penalties,
    total,
    velocity_rewards,
)


def random_breakdown(rng, n=1):
    terms = {name: rng.normal(size=n) for name in RewardBreakdown.TERM_NAMES}
    return RewardBreakdown(**terms, c_k=1.0)


def test_total_matches_independent_oracle(rng):
    for _ in range(1000):
        b = random_breakdown(rng)
        expected = oracles.total_reward({k: float(getattr(b, k)[0]) for k in b.TERM_NAMES})
        assert total(b)[0] == pytest.approx(expected, abs=1e-12)


def test_total_weight_arithmetic():
    zero = {k: np.zeros(1) for k in RewardBreakdown.TERM_NAMES}
    b = RewardBreakdown(**zero)
    assert total(b)[0] == 0.0
    b.r_lv[:] = b.r_av[:] = b.r_lvo[:] = 1.0
    assert total(b)[0] == pytest.approx(2.25)


def test_linear_velocity_published_cases():
    r_lv, r_av, r_lvo = velocity_rewards(
        np.array([[1.0, 0.0]]), np.array([[1.2, 0.0]]), np.array([0.0]), np.array([0.0])
    )
    assert r_lv[0] == pytest.approx(1.0)
    r_lv, _, _ = velocity_rewards(
        np.array([[0.0, 0.0]]), np.array([[0.0, 0.0]]), np.array([0.0]), np.array([0.0])
    )
    assert r_lv[0] == pytest.approx(1.0)
    _, _, r_lvo = velocity_rewards(
        np.array([[1.0, 0.0]]), np.array([[1.0, 0.5]]), np.array([0.0]), np.array([0.0])
    )
    assert r_lvo[0] == pytest.approx(np.exp(-3 * 0.25), abs=1e-9)
    assert r_lvo[0] == pytest.approx(0.47237, abs=1e-5)


def test_velocity_rewards_match_oracle(rng):
    for _ in range(1000):
        v_des = rng.uniform(-1.5, 1.5, 2) * (rng.uniform() > 0.1)
        v = rng.uniform(-2, 2, 2)
        w_des = rng.uniform(-1.5, 1.5) * (rng.uniform() > 0.1)
        w_z = rng.uniform(-2, 2)
        r_lv, r_av, r_lvo = velocity_rewards(v_des[None], v[None], np.array([w_des]), np.array([w_z]))
        assert r_lv[0] == pytest.approx(oracles.linear_velocity_reward(v_des, v), abs=1e-9)
        assert r_av[0] == pytest.approx(oracles.angular_velocity_reward(w_des, w_z), abs=1e-9)
        assert r_lvo[0] == pytest.approx(oracles.orthogonal_velocity_reward(v_des, v), abs=1e-9)


def test_velocity_rewards_bounded(rng):
    v_des = rng.uniform(-1.5, 1.5, (500, 2))
    v = rng.uniform(-3, 3, (500, 2))
    w_des = rng.uniform(-1.5, 1.5, 500)
    w_z = rng.uniform(-3, 3, 500)
    r_lv, r_av, r_lvo = velocity_rewards(v_des, v, w_des, w_z)
    for r in (r_lv, r_av, r_lvo):
        assert np.all(r > 0.0) and np.all(r <= 1.0)


def test_linear_reward_invariant_to_orthogonal_component():
    v_des = np.array([[0.8, 0.0]])
    r1, _, _ = velocity_rewards(v_des, np.array([[0.5, 0.0]]), np.array([0.0]), np.array([0.0]))
    r2, _, _ = velocity_rewards(v_des, np.array([[0.5, 1.7]]), np.array([0.0]), np.array([0.0]))
    assert r1[0] == pytest.approx(r2[0], abs=1e-12)


def test_body_motion_cases():
    r_b, _ = body_and_clearance(np.array([0.0]), np.array([0.0]), np.array([0.0]),
                                np.zeros((1, 4)), np.zeros((1, 208)))
    assert r_b[0] == 0.0
    r_b, _ = body_and_clearance(np.array([1.0]), np.array([0.0]), np.array([0.0]),
                                np.zeros((1, 4)), np.zeros((1, 208)))
    assert r_b[0] == pytest.approx(-1.25)


def test_foot_clearance_gating():
    phases = np.array([[0.5, 0.5, 4.0, 4.0]])  # legs 0,1 swing; 2,3 stance
    samples = np.zeros((1, 4, 52))
    samples[0, 0, :] = -0.25  # swing, too high -> -1
    samples[0, 1, :] = -0.1   # swing, fine
    samples[0, 2, :] = -0.25  # stance: ignored
    _, r_fc = body_and_clearance(np.array([0.0]), np.array([0.0]), np.array([0.0]),
                                 phases, samples.reshape(1, -1))
    assert r_fc[0] == pytest.approx(-1.0)


def test_penalties_zero_case():
    out = penalties(
        q=np.zeros((1, 12)), dq=np.zeros((1, 12)), ddq=np.zeros((1, 12)),
        knee_thresholds=np.full(4, 10.0),
        target_t=np.zeros((1, 12)), target_t1=np.zeros((1, 12)), target_t2=np.zeros((1, 12)),
        tau=np.zeros((1, 12)), contact=np.zeros((1, 4), bool),
        foot_vel=np.zeros((1, 4, 3)), collision=np.zeros(1, bool), c_k=1.0,
    )
    assert all(term[0] == 0.0 for term in out)


def test_slip_and_knee_published_cases():
    contact = np.zeros((1, 4), bool)
    contact[0, 2] = True
    foot_vel = np.zeros((1, 4, 3))
    foot_vel[0, 2, 0] = 0.1
    out = penalties(
        q=np.zeros((1, 12)), dq=np.zeros((1, 12)), ddq=np.zeros((1, 12)),
        knee_thresholds=np.full(4, 10.0),
        target_t=np.zeros((1, 12)), target_t1=np.zeros((1, 12)), target_t2=np.zeros((1, 12)),
        tau=np.zeros((1, 12)), contact=contact, foot_vel=foot_vel,
        collision=np.zeros(1, bool), c_k=1.0,
    )
    r_slip = out[5]
    assert r_slip[0] == pytest.approx(-0.01)

    q = np.zeros((1, 12))
    q[0, list(KNEE_INDICES)] = -1.0  # below threshold: no penalty
    th = np.full(4, -0.7)
    q[0, KNEE_INDICES[1]] = -0.6  # threshold + 0.1
    out = penalties(
        q=q, dq=np.zeros((1, 12)), ddq=np.zeros((1, 12)), knee_thresholds=th,
        target_t=np.zeros((1, 12)), target_t1=np.zeros((1, 12)), target_t2=np.zeros((1, 12)),
        tau=np.zeros((1, 12)), contact=np.zeros((1, 4), bool),
        foot_vel=np.zeros((1, 4, 3)), collision=np.zeros(1, bool), c_k=1.0,
    )
    r_jc = out[2]
    assert r_jc[0] == pytest.approx(-0.01)


def test_all_penalties_match_oracle(rng):
    for _ in range(1000):
        q = rng.uniform(-1.5, 0.5, 12)
        dq = rng.uniform(-3, 3, 12)
        ddq = rng.uniform(-3, 3, 12)
        th = rng.uniform(-1.0, -0.4, 4)
        t0, t1, t2 = rng.uniform(-1, 1, (3, 12))
        tau = rng.uniform(-80, 80, 12)
        contact = rng.uniform(size=4) > 0.5
        fv = rng.uniform(-1, 1, (4, 3))
        coll = bool(rng.uniform() > 0.7)
        c_k = rng.uniform(0.1, 1.0)
        r_co, r_j, r_jc, r_s, r_tau, r_slip = penalties(
            q=q[None], dq=dq[None], ddq=ddq[None], knee_thresholds=th,
            target_t=t0[None], target_t1=t1[None], target_t2=t2[None],
            tau=tau[None], contact=contact[None], foot_vel=fv[None],
            collision=np.array([coll]), c_k=c_k,
        )
        assert r_co[0] == pytest.approx(oracles.collision_reward(coll, c_k), abs=1e-9)
        assert r_j[0] == pytest.approx(oracles.joint_motion_reward(dq, ddq, c_k), abs=1e-9)
        assert r_jc[0] == pytest.approx(oracles.joint_constraint_reward(q, th), abs=1e-9)
        assert r_s[0] == pytest.approx(oracles.smoothness_reward(t0, t1, t2, c_k), abs=1e-9)
        assert r_tau[0] == pytest.approx(oracles.torque_reward(tau, c_k), abs=1e-9)
        assert r_slip[0] == pytest.approx(oracles.slip_reward(contact, fv, c_k), abs=1e-9)


def test_clearance_matches_oracle(rng):
    for _ in range(500):
        phases = rng.uniform(0, 2 * np.pi, 4)
        samples = rng.uniform(-0.4, 0.1, (4, 52))
        _, r_fc = body_and_clearance(
            np.array([0.0]), np.array([0.0]), np.array([0.0]),
            phases[None], samples.reshape(1, -1),
        )
        expected = oracles.foot_clearance_reward(phases, samples)
        assert r_fc[0] == pytest.approx(expected, abs=1e-12)


def test_curriculum_scales_exactly_five_terms(rng):
    kwargs = dict(
        q=rng.uniform(-1, 0, (1, 12)), dq=rng.uniform(-2, 2, (1, 12)),
        ddq=rng.uniform(-2, 2, (1, 12)), knee_thresholds=np.full(4, -0.7),
        target_t=rng.uniform(-1, 1, (1, 12)), target_t1=rng.uniform(-1, 1, (1, 12)),
        target_t2=rng.uniform(-1, 1, (1, 12)), tau=rng.uniform(-50, 50, (1, 12)),
        contact=np.ones((1, 4), bool), foot_vel=rng.uniform(-1, 1, (1, 4, 3)),
        collision=np.ones(1, bool),
    )
    full = penalties(c_k=1.0, **kwargs)
    half = penalties(c_k=0.5, **kwargs)
    scaled = (0, 1, 3, 4, 5)  # r_co, r_j, r_s, r_tau, r_slip
    for i in scaled:
        assert half[i][0] == pytest.approx(0.5 * full[i][0], abs=1e-12)
    assert half[2][0] == pytest.approx(full[2][0], abs=1e-12)  # r_jc unaffected


def test_weights_are_pinned():
    assert WEIGHTS == {
        "r_lv": 0.75, "r_av": 0.75, "r_lvo": 0.75, "r_b": 1.0, "r_fc": 0.003,
        "r_co": 0.1, "r_j": 0.001, "r_jc": 0.08, "r_s": 0.003, "r_tau": 1.0e-6,
        "r_slip": 0.003,
    }

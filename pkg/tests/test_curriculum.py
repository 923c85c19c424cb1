import numpy as np
import pytest

from oracles import curriculum_factor
from quadloco import terrain
from quadloco.curriculum import (
    CurriculumState,
    ParticleSet,
    advance_factor,
    desirability,
    resample_particles,
    student_schedule,
)


def test_advance_factor_cases():
    assert advance_factor(1.0, 0.98) == 1.0
    assert advance_factor(0.3, 0.98) == pytest.approx(0.30731, abs=1e-5)
    assert advance_factor(0.3, 0.98) == pytest.approx(curriculum_factor(0.3, 0.98), abs=1e-12)


def test_advance_factor_converges():
    c = 0.3
    for _ in range(500):
        c = advance_factor(c, 0.98)
    assert abs(c - 1.0) < 1e-3


def test_advance_factor_monotone(rng):
    c = 0.05
    prev = c
    for _ in range(100):
        c = advance_factor(c, 0.97)
        assert c >= prev
        assert c <= 1.0
        prev = c


def test_advance_factor_domain_checks():
    with pytest.raises(ValueError):
        advance_factor(0.0, 0.98)
    with pytest.raises(ValueError):
        advance_factor(1.5, 0.98)
    with pytest.raises(ValueError):
        advance_factor(0.5, 1.0)


def test_matches_oracle_random(rng):
    for _ in range(1000):
        c = rng.uniform(0.01, 1.0)
        d = rng.uniform(0.5, 0.999)
        assert advance_factor(c, d) == pytest.approx(curriculum_factor(c, d), abs=1e-12)


def test_student_schedule_published_points():
    assert student_schedule(5) == (0.0, "flat")
    assert student_schedule(10) == (0.0, "adaptive")
    assert student_schedule(60) == (0.5, "adaptive")
    assert student_schedule(100) == (1.0, "adaptive")
    assert student_schedule(500) == (1.0, "adaptive")


def test_student_schedule_piecewise_linear_and_continuous():
    values = [student_schedule(e)[0] for e in range(20, 101)]
    diffs = np.diff(values)
    assert np.allclose(diffs, 1.0 / 80.0)
    with pytest.raises(ValueError):
        student_schedule(-1)


def test_resampling_degenerate_weight():
    rng = np.random.default_rng(0)
    particles = np.array([[0.1], [0.2], [0.3]])
    weights = np.array([0.0, 1.0, 0.0])
    out, idx = resample_particles(particles, weights, rng)
    assert np.all(out == 0.2)
    assert np.all(idx == 1)
    # all-zero weights fall back to uniform instead of failing
    out, _ = resample_particles(particles, np.zeros(3), rng)
    assert out.shape == particles.shape


def test_all_easy_scores_increase_difficulty():
    rng = np.random.default_rng(1)
    ps = ParticleSet.initialize("stairs_standard", rng, n=50)
    before_h = ps.particles[:, 0].mean()
    before_d = ps.particles[:, 1].mean()
    ps.update(np.ones(50), rng)
    assert ps.particles[:, 0].mean() > before_h  # higher steps
    assert ps.particles[:, 1].mean() < before_d  # shallower treads


def test_all_hard_scores_back_off():
    rng = np.random.default_rng(2)
    ps = ParticleSet.initialize("rough", rng, n=50)
    ps.particles[:, 0] = 0.2
    ps.update(np.zeros(50), rng)
    assert ps.particles[:, 0].mean() < 0.2


def test_identical_scores_preserve_distribution():
    rng = np.random.default_rng(3)
    ps = ParticleSet.initialize("grid_steps", rng, n=200)
    before = ps.particles.copy()
    ps.update(np.full(200, 0.5), rng)  # no drift at score 0.5
    lo, hi, _ = terrain.PARAM_RANGES["grid_steps"]["height"]
    jitter = 0.1 * (hi - lo)
    assert abs(ps.particles[:, 0].mean() - before[:, 0].mean()) < 3 * jitter / np.sqrt(200) * 2


def test_particles_stay_in_ranges():
    rng = np.random.default_rng(4)
    for kind in ("stairs_random", "grid_steps", "rough"):
        ps = ParticleSet.initialize(kind, rng)
        for _ in range(200):
            ps.update(rng.uniform(size=len(ps.particles)), rng)
            for j, name in enumerate(ps.param_names):
                lo, hi, _ = terrain.PARAM_RANGES[kind][name]
                assert ps.particles[:, j].min() >= lo - 1e-12
                assert ps.particles[:, j].max() <= hi + 1e-12


def test_desirability_kernel_shape():
    s = np.array([0.0, 0.5, 1.0])
    w = desirability(s)
    assert w[1] > w[0] == w[2]
    assert w.min() >= 0.05


def test_particle_spec_generation():
    rng = np.random.default_rng(5)
    ps = ParticleSet.initialize("stairs_standard", rng)
    spec = ps.spec(0, seed=99)
    spec.validate()
    assert spec.kind == "stairs_standard"
    assert spec.seed == 99


def test_curriculum_state_roundtrip():
    rng = np.random.default_rng(6)
    state = CurriculumState(c_k=0.4, d=0.98, c_sk=0.3, epoch=12)
    state.particle_sets["rough"] = ParticleSet.initialize("rough", rng)
    blob = state.state_dict()
    other = CurriculumState()
    other.load_state_dict(blob)
    assert other.c_k == 0.4 and other.epoch == 12
    assert np.array_equal(other.particle_sets["rough"].particles,
                          state.particle_sets["rough"].particles)
    state.advance()
    assert state.c_k == pytest.approx(0.4**0.98)

import dataclasses

import numpy as np
import pytest
import torch

from quadloco import terrain
from quadloco.evaluation import (
    StudentRunner,
    TeacherRunner,
    action_and_recon_tables,
    binomial_ci,
    introspect,
    plot_step_sweep,
    step_sweep,
    terrain_grid,
    traversal_success,
    write_csv,
)
from quadloco.networks import StudentPolicy, TeacherPolicy
from quadloco.perception import ObservationNormalizer


@pytest.fixture(scope="module")
def teacher_runner():
    torch.manual_seed(0)
    return TeacherRunner(TeacherPolicy(), ObservationNormalizer())


@pytest.fixture(scope="module")
def student_runner():
    torch.manual_seed(1)
    return StudentRunner(StudentPolicy(), ObservationNormalizer())


def small_eval_cfg(cfg):
    cfg.eval = dataclasses.replace(cfg.eval, trials=4, step_window_s=0.5, grid_window_s=0.5,
                                   grid_trials=2, grid_size=2, action_diff_steps=12,
                                   action_diff_draws=1)
    return cfg


def test_binomial_ci_sane():
    lo, hi = binomial_ci(50, 100)
    assert 0.39 < lo < 0.5 < hi < 0.61
    assert binomial_ci(0, 0) == (0.0, 1.0)
    lo, hi = binomial_ci(100, 100)
    assert hi > 0.999 and lo > 0.9


def test_step_sweep_structure_and_determinism(cfg, student_runner):
    cfg = small_eval_cfg(cfg)
    rows1 = step_sweep(student_runner, cfg, heights=[0.0, 0.1], trials=3, seed=2)
    rows2 = step_sweep(student_runner, cfg, heights=[0.0, 0.1], trials=3, seed=2)
    assert [r["height"] for r in rows1] == [0.0, 0.1]
    for a, b in zip(rows1, rows2):
        assert a == b
    for r in rows1:
        assert 0.0 <= r["ci_lo"] <= r["success_rate"] <= r["ci_hi"] <= 1.0
        assert r["trials"] == 3


def test_evaluation_never_mutates_policy_or_stats(cfg, student_runner):
    cfg = small_eval_cfg(cfg)
    fp_before = student_runner.fingerprint()
    stats_before = student_runner.normalizer.proprio.state_dict()
    step_sweep(student_runner, cfg, heights=[0.05], trials=2, seed=3)
    assert student_runner.fingerprint() == fp_before
    after = student_runner.normalizer.proprio.state_dict()
    assert after["count"] == stats_before["count"]
    assert np.array_equal(after["mean"], stats_before["mean"])


def test_terrain_grid_cells(cfg, student_runner):
    cfg = small_eval_cfg(cfg)
    rows = terrain_grid(student_runner, cfg, kind="stairs_standard", seed=1)
    assert len(rows) == 4  # 2x2 grid over (height, depth)
    names = set(rows[0].keys())
    assert {"kind", "height", "depth", "success_rate", "trials"} <= names
    rows1 = terrain_grid(student_runner, cfg, kind="rough", seed=1)
    assert len(rows1) == 2  # single-parameter kind


def test_traversal_success_counts(cfg, student_runner):
    cfg = small_eval_cfg(cfg)
    rate = traversal_success(student_runner, cfg, terrain.flat_patch(), trials=3, seed=0)
    assert 0.0 <= rate <= 1.0


def test_action_tables_cell_count(cfg, teacher_runner, student_runner):
    cfg = small_eval_cfg(cfg)
    variants = {"gated": student_runner}
    kinds = ["rough", "boxes"]
    action_rows, recon_rows = action_and_recon_tables(
        teacher_runner, variants, cfg, kinds, noise_names=("z_small", "z_large"), seed=0
    )
    assert len(action_rows) == len(kinds) * len(variants) * 2
    assert len(recon_rows) == len(action_rows)
    for row in action_rows:
        assert row["mean"] >= 0.0 and row["std"] >= 0.0
        assert row["steps"] == 12


def test_identical_policies_have_zero_action_difference(cfg, teacher_runner):
    """A student that replays the teacher's belief reproduces its actions."""
    cfg = small_eval_cfg(cfg)

    class TeacherAsStudent:
        def __init__(self, runner):
            self.runner = runner
            self.last = {
                "extero_hat": np.zeros((4, 208)),
                "priv_hat": np.zeros((4, 50)),
                "alpha": np.full((4, 96), 0.5),
            }
            self.normalizer = runner.normalizer

        def reset(self, n, done=None):
            pass

        def act(self, bundle):
            return self.runner.act(bundle)

        def decoded_raw(self):
            return {"extero": self.last["extero_hat"], "privileged": self.last["priv_hat"],
                    "alpha": self.last["alpha"]}

    rows, _ = action_and_recon_tables(
        teacher_runner, {"mirror": TeacherAsStudent(teacher_runner)}, cfg, ["rough"],
        noise_names=("z_small",), seed=0,
    )
    assert rows[0]["mean"] == pytest.approx(0.0, abs=1e-12)


def test_introspection_trace(cfg, student_runner, tmp_path):
    physical = terrain.single_step_patch(0.15, edge_x=0.6)
    perceived = terrain.flat_patch()
    records = introspect(student_runner, cfg, physical, perceived, steps=10,
                         seed=0, out_dir=tmp_path)
    assert len(records) <= 10
    for r in records:
        assert 0.0 < r["alpha_mean"] < 1.0
        assert 0.0 <= r["alpha_min"] <= r["alpha_max"] <= 1.0
        assert r["front_physical_mean"] != r["front_perceived_mean"] or r["step"] == 0
    assert (tmp_path / "introspection.csv").exists()
    assert (tmp_path / "introspection.png").exists()


def test_write_csv_and_plot(tmp_path):
    rows = [
        {"height": 0.0, "success_rate": 1.0, "ci_lo": 0.9, "ci_hi": 1.0, "trials": 10},
        {"height": 0.2, "success_rate": 0.5, "ci_lo": 0.2, "ci_hi": 0.8, "trials": 10},
    ]
    write_csv(tmp_path / "rows.csv", rows)
    plot_step_sweep(rows, tmp_path / "sweep.png")
    assert (tmp_path / "rows.csv").exists()
    assert (tmp_path / "sweep.png").stat().st_size > 0

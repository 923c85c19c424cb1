import dataclasses

import numpy as np
import yaml

from quadloco.cli import main
from quadloco.metrics import read_metrics


def test_train_teacher_cli(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "teacher": {"num_envs": 4, "horizon": 10, "iterations": 2, "terrain_mode": "flat",
                    "checkpoint_every": 1},
    }))
    rc = main(["train-teacher", "--config", str(cfg_path), "--seed", "3",
               "--out", str(tmp_path / "run")])
    assert rc == 0
    assert (tmp_path / "run" / "teacher.ckpt").exists()
    assert (tmp_path / "run" / "config.yaml").exists()
    rows = read_metrics(tmp_path / "run" / "teacher_metrics.csv")
    assert len(rows) == 2


def test_train_student_cli_and_eval(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump({
        "teacher": {"num_envs": 4, "horizon": 10, "iterations": 2, "terrain_mode": "flat",
                    "checkpoint_every": 1},
        "student": {"num_envs": 4, "horizon": 10, "epochs": 2, "checkpoint_every": 1},
        "eval": {"trials": 2, "step_heights": [0.0], "step_window_s": 0.3},
    }))
    assert main(["train-teacher", "--config", str(cfg_path), "--seed", "3",
                 "--out", str(tmp_path / "t")]) == 0
    teacher_ckpt = tmp_path / "t" / "teacher.ckpt"
    assert main(["train-student", "--config", str(cfg_path), "--seed", "3",
                 "--teacher", str(teacher_ckpt), "--out", str(tmp_path / "s")]) == 0
    student_ckpt = tmp_path / "s" / "student_gated.ckpt"
    assert student_ckpt.exists()
    assert main(["train-student", "--config", str(cfg_path), "--seed", "3", "--no-gate",
                 "--teacher", str(teacher_ckpt), "--out", str(tmp_path / "s2")]) == 0
    assert (tmp_path / "s2" / "student_nogate.ckpt").exists()
    assert main(["eval", "--config", str(cfg_path), "--protocol", "step_sweep",
                 "--ckpt", str(student_ckpt), "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "step_sweep.csv").exists()
    assert (tmp_path / "e" / "step_sweep.png").exists()


def test_cli_validation_error_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"ppo": {"discount": 1.5}}))
    rc = main(["train-teacher", "--config", str(bad), "--out", str(tmp_path / "x")])
    assert rc == 1
    missing = tmp_path / "missing.ckpt"
    rc = main(["eval", "--protocol", "step_sweep", "--ckpt", str(missing),
               "--out", str(tmp_path / "y")])
    assert rc == 1


def test_export_terrain_cli(tmp_path):
    out = tmp_path / "grid.txt"
    rc = main(["export-terrain", "--kind", "rough", "--param", "amplitude=0.2",
               "--seed", "4", "--out", str(out)])
    assert rc == 0
    grid = np.loadtxt(out)
    assert grid.shape == (200, 200)

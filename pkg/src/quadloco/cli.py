"""Command-line entry points.

Exit codes: 0 on success, 1 on configuration/validation errors, 2 on
runtime divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .ppo import TrainingDiverged
from .terrain import KINDS, TerrainError


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None, help="YAML config file (defaults apply if omitted)")
    p.add_argument("--seed", type=int, default=None, help="global seed (overrides the config)")
    p.add_argument("--out", type=str, required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadloco", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="PPO training of the privileged teacher")
    _add_common(p)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--resume", type=str, default=None, help="teacher checkpoint to resume from")

    p = sub.add_parser("train-student", help="distill a teacher checkpoint into a student")
    _add_common(p)
    p.add_argument("--teacher", type=str, required=True, help="teacher checkpoint")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--no-gate", action="store_true", help="train the ablation student without the gate")

    p = sub.add_parser("eval", help="run an evaluation protocol on a checkpoint")
    _add_common(p)
    p.add_argument("--protocol", type=str, required=True,
                   choices=["step_sweep", "terrain_grid", "action_diff", "recon_error", "introspection"])
    p.add_argument("--ckpt", type=str, required=True, help="policy checkpoint (teacher or student)")
    p.add_argument("--teacher-ckpt", type=str, default=None,
                   help="teacher checkpoint for action_diff/recon_error")
    p.add_argument("--extra-ckpt", type=str, action="append", default=[],
                   help="additional student checkpoints (e.g. the non-gated variant)")
    p.add_argument("--kind", type=str, default="stairs_standard", choices=list(KINDS))
    p.add_argument("--noise", type=str, default=None,
                   choices=["nominal", "offset", "noisy", "z_small", "z_large"])

    p = sub.add_parser("export-terrain", help="write a heightfield grid for plotting")
    p.add_argument("--kind", type=str, required=True, choices=list(KINDS))
    p.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    return parser


def _load_runner(path: str):
    from .checkpoint import load_checkpoint
    from .distill import load_student_policy
    from .evaluation import StudentRunner, TeacherRunner
    from .teacher import load_teacher_policy

    payload = load_checkpoint(path)
    if payload.get("kind") == "teacher":
        policy, normalizer, _ = load_teacher_policy(path)
        return TeacherRunner(policy, normalizer)
    student, normalizer, _ = load_student_policy(path)
    return StudentRunner(student, normalizer)


def run_eval(args, cfg) -> int:
    from . import evaluation, terrain
    from .evaluation import StudentRunner, TeacherRunner, write_csv
    from .teacher import load_teacher_policy

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runner = _load_runner(args.ckpt)
    seed = cfg.seed if args.seed is None else args.seed

    if args.protocol == "step_sweep":
        rows = evaluation.step_sweep(runner, cfg, seed=seed, noise=args.noise)
        write_csv(out / "step_sweep.csv", rows)
        evaluation.plot_step_sweep(rows, out / "step_sweep.png")
    elif args.protocol == "terrain_grid":
        rows = evaluation.terrain_grid(runner, cfg, kind=args.kind, seed=seed, noise=args.noise)
        write_csv(out / f"terrain_grid_{args.kind}.csv", rows)
    elif args.protocol in ("action_diff", "recon_error"):
        if args.teacher_ckpt is None:
            print("error: --teacher-ckpt is required for this protocol", file=sys.stderr)
            return 1
        teacher_policy, teacher_norm, _ = load_teacher_policy(args.teacher_ckpt)
        teacher_runner = TeacherRunner(teacher_policy, teacher_norm)
        students = {"primary": runner}
        for k, extra in enumerate(args.extra_ckpt):
            students[f"variant_{k}"] = _load_runner(extra)
        kinds = [args.kind] if args.kind else list(KINDS)
        action_rows, recon_rows = evaluation.action_and_recon_tables(
            teacher_runner, students, cfg, kinds, seed=seed
        )
        write_csv(out / "action_diff.csv", action_rows)
        write_csv(out / "recon_error.csv", recon_rows)
    elif args.protocol == "introspection":
        physical = terrain.single_step_patch(0.15, edge_x=1.0)
        perceived = terrain.flat_patch()
        evaluation.introspect(runner, cfg, physical, perceived, seed=seed, out_dir=out)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export-terrain":
            from . import terrain

            params = {}
            for item in args.param:
                name, _, value = item.partition("=")
                params[name] = float(value)
            patch = terrain.generate(terrain.TerrainSpec(args.kind, params, args.seed))
            terrain.export_heightfield(patch, args.out)
            return 0

        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed

        if args.command == "train-teacher":
            from .teacher import train_teacher

            train_teacher(cfg, args.out, seed=args.seed, iterations=args.iterations,
                          resume=args.resume)
            return 0
        if args.command == "train-student":
            from .distill import distill_student

            distill_student(args.teacher, cfg, args.out, seed=args.seed,
                            epochs=args.epochs, gated=not args.no_gate)
            return 0
        if args.command == "eval":
            return run_eval(args, cfg)
    except (ConfigError, TerrainError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

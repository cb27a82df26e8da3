"""Command line entry points: gen-data, train, simulate, experiment,
dump-schedule."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dataset as dataset_mod
from . import gait as gait_mod
from . import sim as sim_mod
from . import valuenet
from .centroidal import CentroidalState
from .config import Config, load_config


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int, default=0)


def _load_cfg(args) -> Config:
    return load_config(args.config) if args.config else Config()


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    ds = dataset_mod.generate(
        args.count_long, args.gait, cfg,
        seed=args.seed, workers=args.workers, progress=True,
    )
    dataset_mod.save(ds, args.out)
    print(f"wrote {len(ds)} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    ds = dataset_mod.load(args.dataset, expected_config_hash=cfg.hash())
    if ds.config_mismatch:
        print("warning: dataset was generated under a different config",
              file=sys.stderr)
    tc = valuenet.TrainConfig(
        epochs=args.epochs if args.epochs else cfg.epochs,
        batch=args.batch if args.batch else cfg.batch,
        learning_rate=args.lr if args.lr else cfg.learning_rate,
        seed=args.seed,
        val_fraction=cfg.val_fraction,
    )
    model, norm, curves = valuenet.train(ds, tc)
    valuenet.save_model(
        model, norm, args.out, eps_eig=cfg.eps_eig, config_hash=cfg.hash()
    )
    if args.curves:
        with open(args.curves, "w") as f:
            f.write("epoch,train_l1,val_l1\n")
            for i, (tr, va) in enumerate(curves):
                f.write(f"{i},{tr:.17g},{va:.17g}\n")
    print(
        f"trained {tc.epochs} epochs; final train L1 {curves[-1, 0]:.4f}, "
        f"val L1 {curves[-1, 1]:.4f}; model saved to {args.out}"
    )
    return 0


def _predictor_from_file(path, cfg: Config) -> sim_mod.ValueNetPredictor:
    model, norm, header = valuenet.load_model(path)
    return sim_mod.ValueNetPredictor(
        model, norm, eps_eig=header.get("eps_eig", cfg.eps_eig)
    )


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    predictor = _predictor_from_file(args.model, cfg)
    sim = sim_mod.SimConfig(
        duration=args.duration,
        control_rate=cfg.control_rate,
        prediction_divisor=args.pred_divisor,
        v_cmd_profile=[sim_mod.VcmdSegment(0.0, np.array([args.vx, args.vy, 0.0]))],
        ablate_constraints=args.ablate_constraints,
        seed=args.seed,
        obs_noise_std=args.obs_noise,
    )
    log = sim_mod.run(cfg, cfg.gait(args.gait), predictor, sim)
    log.to_csv(args.out, include_timings=args.timings)
    err = sim_mod.tracking_error(log)
    print(
        f"{log.ticks} ticks, fell={log.fell}, "
        f"steady mean |vel err| = {err:.4f} m/s; log at {args.out}"
    )
    if args.assert_stable and log.fell:
        print("run fell; failing per --assert-stable", file=sys.stderr)
        return 1
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_cfg(args)
    predictor = _predictor_from_file(args.model, cfg)
    if args.name == "velocity-tracking":
        path = sim_mod.experiment_velocity_tracking(
            cfg, {args.gait: predictor}, args.out_dir, seed=args.seed
        )
    elif args.name == "frequency-sweep":
        path = sim_mod.experiment_frequency_sweep(
            cfg, args.gait, predictor, args.out_dir, seed=args.seed
        )
    elif args.name == "constraint-ablation":
        path = sim_mod.experiment_constraint_ablation(
            cfg, args.gait, predictor, args.out_dir, seed=args.seed
        )
    else:
        raise SystemExit(f"unknown experiment {args.name!r}")
    print(f"summary written to {path}")
    return 0


def cmd_dump_schedule(args) -> int:
    cfg = _load_cfg(args)
    x0 = CentroidalState(
        c=[0.0, 0.0, cfg.desired_height],
        alpha=[0.0] * 3,
        c_dot=[0.0] * 3,
        omega=[0.0] * 3,
    )
    schedule = gait_mod.build_schedule(
        x0, np.array([args.vx, args.vy, 0.0]), cfg.gait(args.gait),
        args.duration, cfg.dt,
    )
    gait_mod.dump_schedule_csv(schedule, args.out)
    print(f"{schedule.steps} steps written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="valueqp",
        description="value-function learning and one-step QP locomotion control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a training dataset")
    _add_common(p)
    p.add_argument("--gait", choices=["trot", "bound"], default="trot")
    p.add_argument("--count-long", type=int, default=64)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the value regressor")
    _add_common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--curves", help="write per-epoch loss curves CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("simulate", help="closed-loop simulation run")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--gait", choices=["trot", "bound", "stand"], default="trot")
    p.add_argument("--vx", type=float, default=0.0)
    p.add_argument("--vy", type=float, default=0.0)
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--pred-divisor", type=int, default=1)
    p.add_argument("--ablate-constraints", action="store_true")
    p.add_argument("--obs-noise", type=float, default=0.0)
    p.add_argument(
        "--timings", action="store_true",
        help="record measured QP solve times (breaks byte reproducibility)",
    )
    p.add_argument("--assert-stable", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run an experiment driver")
    _add_common(p)
    p.add_argument(
        "name",
        choices=["velocity-tracking", "frequency-sweep", "constraint-ablation"],
    )
    p.add_argument("--model", required=True)
    p.add_argument("--gait", choices=["trot", "bound"], default="trot")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("dump-schedule", help="write a gait schedule CSV")
    _add_common(p)
    p.add_argument("--gait", choices=["trot", "bound", "stand"], default="trot")
    p.add_argument("--vx", type=float, default=0.0)
    p.add_argument("--vy", type=float, default=0.0)
    p.add_argument("--duration", type=float, default=1.28)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_schedule)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line front end tying the pipeline together.

Subcommands: gen, train1, transfer, train2, rollout, eval, plot, ablate.
Every option can also come from a flat ``key = value`` config file passed
with --config; explicit command-line flags win.  Exit codes: 0 success,
1 usage error, 2 data/validation error.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
from dataclasses import replace

import numpy as np

from .ablation import ablation_grid, default_ablation_data, format_table
from .datamodel import Pose2D, SensorLayout
from .fileio import (
    DataFormatError,
    atomic_write,
    load_checkpoint,
    load_poses,
    load_trajectory,
    parse_config_file,
    render_svg,
    save_checkpoint,
    save_path_csv,
    save_trajectory,
)
from .metrics import evaluate_trajectories
from .synth import GaitSpec, NoiseSpec, generate_trajectory
from .train import TrainConfig, rollout_poses, train_stage1, train_stage2, zero_pad_transfer


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_bool(text: str) -> bool:
    val = text.strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _parse_hidden(text: str) -> tuple:
    try:
        sizes = tuple(int(p) for p in str(text).split(",") if p.strip())
    except ValueError:
        raise UsageError(f"bad hidden sizes {text!r}") from None
    if not sizes:
        raise UsageError("hidden sizes must not be empty")
    return sizes


# per-command (dest -> (converter, default)); used both for config-file
# merging and for filling unset flags
_SPECS = {
    "gen": {
        "out": (str, None),
        "count": (int, 4),
        "duration": (float, 20.0),
        "seed": (int, 0),
        "flavor": (str, "sim"),
        "rate": (float, 50.0),
        "gyro_std": (float, NoiseSpec().gyro_std),
        "accel_std": (float, NoiseSpec().accel_std),
        "accel_bias_walk_std": (float, NoiseSpec().accel_bias_walk_std),
        "joint_std": (float, NoiseSpec().joint_std),
        "dp_noise_std": (float, NoiseSpec().dp_feedback_std),
        "gait_freq": (float, GaitSpec().gait_freq),
        "tracking_tau": (float, GaitSpec().vel_tracking_tau),
        "sway_amp": (float, GaitSpec().body_sway_amp),
    },
    "train1": {
        "data": (str, None),
        "out": (str, None),
        "epochs": (int, 8),
        "batch_size": (int, 256),
        "lr": (float, 1e-3),
        "lr_final": (float, None),
        "history": (int, 50),
        "horizon": (int, 1),
        "seed": (int, 0),
        "hidden": (_parse_hidden, (512, 256, 128)),
        "no_dp_hist": (_parse_bool, False),
        "no_actions": (_parse_bool, False),
    },
    "transfer": {
        "ckpt": (str, None),
        "out": (str, None),
        "data": (str, ""),
    },
    "train2": {
        "data": (str, None),
        "ckpt": (str, None),
        "out": (str, None),
        "epochs": (int, 4),
        "lr": (float, 2e-4),
        "seed": (int, 0),
        "segment_len": (int, 250),
        "holdout": (str, ""),
    },
    "rollout": {
        "ckpt": (str, None),
        "traj": (str, None),
        "out": (str, None),
        "start": (str, ""),
    },
    "eval": {
        "gt": (str, None),
        "pred": (str, None),
        "out": (str, ""),
    },
    "plot": {
        "gt": (str, None),
        "pred": (str, None),
        "out": (str, None),
    },
    "ablate": {
        "out": (str, None),
        "seed": (int, 0),
        "count": (int, 6),
        "eval_count": (int, 2),
        "duration": (float, 12.0),
        "epochs": (int, 3),
        "batch_size": (int, 256),
        "lr": (float, 1e-3),
        "history": (int, 50),
        "hidden": (_parse_hidden, (64, 32)),
    },
}
_REQUIRED = {
    "gen": ("out",),
    "train1": ("data", "out"),
    "transfer": ("ckpt", "out"),
    "train2": ("data", "ckpt", "out"),
    "rollout": ("ckpt", "traj", "out"),
    "eval": ("gt", "pred"),
    "plot": ("gt", "pred", "out"),
    "ablate": ("out",),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="autoodom", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for command, spec in _SPECS.items():
        p = sub.add_parser(command, add_help=True)
        p.error = parser.error
        p.add_argument("--config", default=None, help="key = value defaults file")
        for dest, (conv, _default) in spec.items():
            flag = "--" + dest.replace("_", "-")
            if conv is _parse_bool:
                p.add_argument(flag, dest=dest, action="store_const", const=True, default=None)
            else:
                p.add_argument(flag, dest=dest, type=str, default=None)
    return parser


def _resolve(args) -> dict:
    """Merge CLI flags over config-file values over built-in defaults."""
    spec = _SPECS[args.command]
    file_vals = parse_config_file(args.config) if args.config else {}
    unknown = set(file_vals) - set(spec)
    if unknown:
        raise UsageError(f"unknown config key {sorted(unknown)[0]!r}")
    out = {}
    for dest, (conv, default) in spec.items():
        cli_val = getattr(args, dest)
        if cli_val is not None:
            out[dest] = cli_val if conv is _parse_bool else conv(cli_val)
        elif dest in file_vals:
            out[dest] = conv(file_vals[dest])
        else:
            out[dest] = default
    for dest in _REQUIRED[args.command]:
        if out[dest] in (None, ""):
            raise UsageError(f"--{dest.replace('_', '-')} is required for {args.command}")
    return out


def _require_file(path: str) -> str:
    if not os.path.isfile(path):
        raise DataFormatError(f"{path}: no such file")
    return path


def _load_dataset(path: str) -> list:
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, "*.csv")))
        if not files:
            raise DataFormatError(f"{path}: no trajectory CSVs found")
    else:
        files = [_require_file(path)]
    return [load_trajectory(f) for f in files]


def _parse_start(text: str) -> Pose2D:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"--start expects 'x,y,yaw', got {text!r}")
    try:
        x, y, yaw = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"--start expects numbers, got {text!r}") from None
    return Pose2D(x, y, yaw)


def _cmd_gen(opt: dict) -> int:
    if opt["flavor"] not in ("sim", "real-like"):
        raise UsageError(f"--flavor must be 'sim' or 'real-like', got {opt['flavor']!r}")
    os.makedirs(opt["out"], exist_ok=True)
    gait = GaitSpec(
        gait_freq=opt["gait_freq"],
        vel_tracking_tau=opt["tracking_tau"],
        body_sway_amp=opt["sway_amp"],
    )
    noise = NoiseSpec(
        gyro_std=opt["gyro_std"],
        accel_std=opt["accel_std"],
        accel_bias_walk_std=opt["accel_bias_walk_std"],
        joint_std=opt["joint_std"],
        dp_feedback_std=opt["dp_noise_std"],
    )
    for i in range(opt["count"]):
        traj = generate_trajectory(
            opt["seed"] + i, opt["duration"], gait, noise, opt["flavor"], opt["rate"]
        )
        save_trajectory(traj, os.path.join(opt["out"], f"traj_{i:03d}.csv"))
    print(f"wrote {opt['count']} {opt['flavor']} trajectories to {opt['out']}")
    return 0


def _train_config(opt: dict, stage: str) -> TrainConfig:
    return TrainConfig(
        epochs=opt["epochs"],
        batch_size=opt.get("batch_size", 256),
        lr=opt["lr"],
        lr_final=opt.get("lr_final"),
        history_len=opt.get("history", 50),
        horizon=opt.get("horizon", 1),
        seed=opt["seed"],
        stage=stage,
        use_accel=False,
        use_dp_hist=not opt.get("no_dp_hist", False),
        use_actions=not opt.get("no_actions", False),
        hidden_sizes=opt.get("hidden", (512, 256, 128)),
        segment_len=opt.get("segment_len", 250),
    )


def _cmd_train1(opt: dict) -> int:
    dataset = _load_dataset(opt["data"])
    config = _train_config(opt, "stage1")
    ckpt = train_stage1(dataset, config)
    save_checkpoint(ckpt, opt["out"])
    final = ckpt.loss_history[-1] if ckpt.loss_history else float("nan")
    print(f"stage-1 checkpoint {opt['out']}: {ckpt.params.param_count} params, "
          f"final loss {final:.3e}")
    return 0


def _cmd_transfer(opt: dict) -> int:
    ckpt = load_checkpoint(_require_file(opt["ckpt"]))
    new_layout = replace(ckpt.layout, use_accel=True)
    dataset = _load_dataset(opt["data"]) if opt["data"] else None
    widened = zero_pad_transfer(ckpt, new_layout, dataset)
    save_checkpoint(widened, opt["out"])
    print(f"transferred checkpoint {opt['out']}: input width "
          f"{ckpt.params.input_dim} -> {widened.params.input_dim}")
    return 0


def _cmd_train2(opt: dict) -> int:
    dataset = _load_dataset(opt["data"])
    ckpt = load_checkpoint(_require_file(opt["ckpt"]))
    config = TrainConfig(
        epochs=opt["epochs"],
        lr=opt["lr"],
        seed=opt["seed"],
        stage="stage2",
        history_len=ckpt.layout.history_len,
        horizon=ckpt.layout.horizon,
        use_accel=ckpt.layout.use_accel,
        use_dp_hist=ckpt.layout.use_dp_hist,
        use_actions=ckpt.layout.use_actions,
        segment_len=opt["segment_len"],
    )
    holdout = _load_dataset(opt["holdout"]) if opt["holdout"] else None
    tuned = train_stage2(dataset, ckpt, config, holdout=holdout)
    save_checkpoint(tuned, opt["out"])
    where = "holdout" if holdout is not None else "training set"
    print(f"stage-2 checkpoint {opt['out']}: rollout ATE_o on {where} = {tuned.holdout_ate:.4f} m")
    return 0


def _cmd_rollout(opt: dict) -> int:
    ckpt = load_checkpoint(_require_file(opt["ckpt"]))
    traj = load_trajectory(_require_file(opt["traj"]))
    start = _parse_start(opt["start"]) if opt["start"] else None
    poses = rollout_poses(ckpt, traj, start)
    save_path_csv(poses, traj.rate_hz, opt["out"])
    print(f"wrote predicted path {opt['out']} ({len(poses)} frames)")
    return 0


_REPORT_COLUMNS = ("ate_o", "ate_u", "rpe", "length_m", "duration_s",
                   "ate_o_yaw", "ate_o_tx", "ate_o_ty",
                   "ate_u_yaw", "ate_u_tx", "ate_u_ty")


def _cmd_eval(opt: dict) -> int:
    gt, rate = load_poses(_require_file(opt["gt"]))
    pred, _ = load_poses(_require_file(opt["pred"]))
    if gt.shape != pred.shape:
        raise DataFormatError(
            f"gt has {gt.shape[0]} poses but pred has {pred.shape[0]}"
        )
    report = evaluate_trajectories(gt, pred, rate)
    values = (
        report.ate_o, report.ate_u, report.rpe, report.length_m, report.duration_s,
        report.ate_o_align.yaw, *report.ate_o_align.translation,
        report.ate_u_align.yaw, *report.ate_u_align.translation,
    )
    if opt["out"]:
        atomic_write(
            opt["out"],
            ",".join(_REPORT_COLUMNS) + "\n" + ",".join(f"{v:.9g}" for v in values) + "\n",
        )
    print(f"ate_o={report.ate_o:.6f} ate_u={report.ate_u:.6f} rpe={report.rpe:.6f}")
    return 0


def _cmd_plot(opt: dict) -> int:
    gt, _ = load_poses(_require_file(opt["gt"]))
    pred, _ = load_poses(_require_file(opt["pred"]))
    atomic_write(opt["out"], render_svg(gt[:, :2], pred[:, :2]))
    n = min(gt.shape[0], pred.shape[0])
    lines = ["i,gt_x,gt_y,pred_x,pred_y"]
    for i in range(n):
        lines.append(f"{i},{gt[i,0]:.9g},{gt[i,1]:.9g},{pred[i,0]:.9g},{pred[i,1]:.9g}")
    atomic_write(os.path.splitext(opt["out"])[0] + ".csv", "\n".join(lines) + "\n")
    print(f"wrote {opt['out']}")
    return 0


def _cmd_ablate(opt: dict) -> int:
    os.makedirs(opt["out"], exist_ok=True)
    base = TrainConfig(
        epochs=opt["epochs"],
        batch_size=opt["batch_size"],
        lr=opt["lr"],
        history_len=opt["history"],
        seed=opt["seed"],
        hidden_sizes=opt["hidden"],
        stage="ablate",
    )
    train_set, eval_set = default_ablation_data(
        opt["seed"], opt["count"], opt["eval_count"], opt["duration"]
    )
    rows = ablation_grid(base, train_set, eval_set)
    out = os.path.join(opt["out"], "ablation.csv")
    atomic_write(out, format_table(rows))
    print(f"wrote {out} ({len(rows)} configurations)")
    return 0


_HANDLERS = {
    "gen": _cmd_gen,
    "train1": _cmd_train1,
    "transfer": _cmd_transfer,
    "train2": _cmd_train2,
    "rollout": _cmd_rollout,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
    "ablate": _cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (see --help)")
        return _HANDLERS[args.command](_resolve(args))
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())

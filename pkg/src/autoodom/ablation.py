"""Input-modality ablation grid.

Trains one teacher-forced model per sensor-flag combination crossed with
the two prediction horizons (one tick, 1.02 s) on a shared synthetic
dataset, then reports rollout ATEs and teacher-forced RPE on held-out
trajectories.  Everything is seeded, so the table is reproducible
byte-for-byte.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from . import metrics
from .synth import GaitSpec, NoiseSpec, generate_trajectory
from .train import TrainConfig, rollout_poses, teacher_forced_increments, train_supervised

ABLATION_COLUMNS = ("use_accel", "use_dp_hist", "use_actions", "horizon",
                    "ate_o", "ate_u", "rpe")
HORIZONS = (1, 51)


def ablation_grid(base: TrainConfig, train_set: Sequence, eval_set: Sequence) -> list:
    """One result row per {accel, dp_hist, actions} x {horizon} combination."""
    rows = []
    for use_accel in (False, True):
        for use_dp in (False, True):
            for use_act in (False, True):
                for horizon in HORIZONS:
                    config = replace(
                        base,
                        use_accel=use_accel,
                        use_dp_hist=use_dp,
                        use_actions=use_act,
                        horizon=horizon,
                        stage="ablate",
                    )
                    ckpt = train_supervised(train_set, config)
                    sq_sum, count = 0.0, 0
                    ates_o, ates_u = [], []
                    for traj in eval_set:
                        pred, gt = teacher_forced_increments(ckpt, traj)
                        err = pred - gt
                        sq_sum += float(np.sum(err * err))
                        count += err.shape[0]
                        pred_poses = rollout_poses(ckpt, traj)
                        report = metrics.evaluate_trajectories(
                            traj.gt_poses(), pred_poses, traj.rate_hz
                        )
                        ates_o.append(report.ate_o)
                        ates_u.append(report.ate_u)
                    rows.append(
                        {
                            "use_accel": use_accel,
                            "use_dp_hist": use_dp,
                            "use_actions": use_act,
                            "horizon": horizon,
                            "ate_o": float(np.mean(ates_o)),
                            "ate_u": float(np.mean(ates_u)),
                            "rpe": float(np.sqrt(sq_sum / count)),
                        }
                    )
    return rows


def default_ablation_data(seed: int, n_train: int = 6, n_eval: int = 2,
                          duration: float = 12.0):
    """Shared sim-flavor train/eval split for the ablation grid."""
    gait, noise = GaitSpec(), NoiseSpec()
    train_set = [generate_trajectory(seed + i, duration, gait, noise, "sim")
                 for i in range(n_train)]
    eval_set = [generate_trajectory(seed + 1000 + i, duration, gait, noise, "sim")
                for i in range(n_eval)]
    return train_set, eval_set


def format_table(rows: list) -> str:
    lines = [",".join(ABLATION_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                [
                    str(int(row["use_accel"])),
                    str(int(row["use_dp_hist"])),
                    str(int(row["use_actions"])),
                    str(row["horizon"]),
                    f"{row['ate_o']:.6f}",
                    f"{row['ate_u']:.6f}",
                    f"{row['rpe']:.6f}",
                ]
            )
        )
    return "\n".join(lines) + "\n"

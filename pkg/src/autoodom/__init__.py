"""Proprioceptive odometry toolkit.

Windowed proprioceptive observations are mapped to planar body-frame
displacement increments by a small dense network trained in two stages:
teacher-forced pre-training on clean synthetic data, then autoregressive
fine-tuning on noisy data with the network's own integrated estimates fed
back as the displacement-history input.  Includes a synthetic locomotion
data generator and standard trajectory metrics (first-frame and optimally
aligned ATE, RPE).
"""

from .datamodel import (
    ObservationFrame,
    Pose2D,
    SensorLayout,
    Trajectory,
    TrajectoryMeta,
    dp_history,
    flatten_window,
)
from .metrics import (
    AlignmentTransform,
    EvalReport,
    ate_first_frame,
    baseline_cmd_integration,
    evaluate_trajectories,
    integrate_increments,
    rpe,
    umeyama_align,
)
from .net import MlpParams, OptimizerState, adam_update, forward, init_adam, init_mlp, loss_and_grad
from .synth import GaitSpec, NoiseSpec, generate_trajectory, gt_increment, sample_command_profile
from .train import (
    Checkpoint,
    TrainConfig,
    compute_norm_stats,
    rollout,
    rollout_poses,
    train_stage1,
    train_stage2,
    zero_pad_transfer,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentTransform",
    "Checkpoint",
    "EvalReport",
    "GaitSpec",
    "MlpParams",
    "NoiseSpec",
    "ObservationFrame",
    "OptimizerState",
    "Pose2D",
    "SensorLayout",
    "TrainConfig",
    "Trajectory",
    "TrajectoryMeta",
    "adam_update",
    "ate_first_frame",
    "baseline_cmd_integration",
    "compute_norm_stats",
    "dp_history",
    "evaluate_trajectories",
    "flatten_window",
    "forward",
    "generate_trajectory",
    "gt_increment",
    "init_adam",
    "init_mlp",
    "integrate_increments",
    "loss_and_grad",
    "rollout",
    "rollout_poses",
    "rpe",
    "sample_command_profile",
    "train_stage1",
    "train_stage2",
    "umeyama_align",
    "zero_pad_transfer",
]

"""Two-stage displacement-network training.

Stage 1 is teacher-forced regression on clean simulation-flavor data with
the accelerometer channel disabled.  The trained network is then widened
with zero-valued first-layer columns for the accelerometer features
(zero-padding transfer), after which stage 2 fine-tunes it autoregressively
on real-like data: trajectory segments are unrolled with the network's own
integrated position estimates feeding the dp-history channel, exactly as at
deployment time.  Fed-back estimates are treated as constants in the
gradient (no differentiation through the feedback loop).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .datamodel import CHANNEL_SPEC, Pose2D, SensorLayout, Trajectory, rot2
from .net import (
    MlpParams,
    adam_update,
    forward,
    forward_batch,
    init_adam,
    init_mlp,
    list_to_params,
    loss_and_grad,
    params_to_list,
)
from .synth import gt_increment_series

DP_LAG_SECONDS = 1.0  # dp-history interval; 50 frames at the nominal 50 Hz


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and sensor-layout flags for one training run."""

    epochs: int = 8
    batch_size: int = 256
    lr: float = 1e-3
    lr_final: Optional[float] = None  # linear decay target; None keeps lr constant
    history_len: int = 50
    horizon: int = 1
    seed: int = 0
    stage: str = "stage1"
    use_accel: bool = False
    use_dp_hist: bool = True
    use_actions: bool = True
    hidden_sizes: tuple = (512, 256, 128)
    segment_len: int = 250  # stage-2 unroll length in frames

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))

    def layout(self) -> SensorLayout:
        return SensorLayout(
            use_accel=self.use_accel,
            use_dp_hist=self.use_dp_hist,
            use_actions=self.use_actions,
            history_len=self.history_len,
            horizon=self.horizon,
        )

    def digest(self) -> str:
        text = ",".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Checkpoint:
    """Trained parameters plus the layout they were trained against."""

    params: MlpParams
    layout: SensorLayout
    config_digest: str
    loss_history: tuple = ()
    holdout_ate: Optional[float] = None

    def __post_init__(self):
        if self.layout.window_dim != self.params.layer_sizes[0]:
            raise ValueError(
                f"layout window width {self.layout.window_dim} does not match "
                f"network input width {self.params.layer_sizes[0]}"
            )
        object.__setattr__(self, "loss_history", tuple(float(x) for x in self.loss_history))


def compute_norm_stats(dataset: Sequence[Trajectory], layout: SensorLayout):
    """Per-feature mean/std over every flattenable window in the dataset.

    Returns flattened (window_dim,) arrays; std is clamped to >= 1e-6.
    """
    if not dataset:
        raise ValueError("empty dataset")
    h, d = layout.history_len, layout.input_dim
    s1 = np.zeros((h, d))
    s2 = np.zeros((h, d))
    count = 0
    for traj in dataset:
        n = len(traj)
        if n < h:
            continue
        mat = traj.feature_matrix(layout)
        nw = n - h + 1
        for slot in range(h):
            block = mat[slot : slot + nw]
            s1[slot] += block.sum(axis=0)
            s2[slot] += (block * block).sum(axis=0)
        count += nw
    if count == 0:
        raise ValueError("no trajectory is long enough for the history window")
    mean = s1 / count
    var = np.maximum(s2 / count - mean * mean, 0.0)
    std = np.maximum(np.sqrt(var), 1e-6)
    return mean.reshape(-1), std.reshape(-1)


def _gather_windows(mat: np.ndarray, ends: np.ndarray, h: int) -> np.ndarray:
    idx = ends[:, None] + np.arange(-h + 1, 1)[None, :]
    return mat[idx].reshape(len(ends), -1)


WARMUP_FRAC = 0.05


def _lr_at(config: TrainConfig, step: int, total: int) -> float:
    """Linear warmup to the peak rate, then linear decay to lr_final."""
    if config.lr_final is None or total <= 1:
        return config.lr
    warm = max(1, int(WARMUP_FRAC * total))
    if step < warm:
        return config.lr * (step + 1) / warm
    frac = (step - warm) / max(1, total - 1 - warm)
    return config.lr + (config.lr_final - config.lr) * frac


def train_supervised(dataset: Sequence[Trajectory], config: TrainConfig) -> Checkpoint:
    """Teacher-forced window regression for an arbitrary sensor layout.

    All window features, including dp-history, come from the stored
    (ground-truth-derived) channels.  Windows across the dataset are treated
    as independent samples and visited in shuffled minibatches.
    """
    if not dataset:
        raise ValueError("empty dataset")
    layout = config.layout()
    h, horizon = layout.history_len, layout.horizon
    mats, targets, index = [], [], []
    for ti, traj in enumerate(dataset):
        if len(traj) < h + horizon:
            raise ValueError(f"trajectory {ti} too short for H={h}, horizon={horizon}")
        mats.append(traj.feature_matrix(layout))
        targets.append(gt_increment_series(traj, horizon))
        for t in range(h - 1, len(traj) - horizon):
            index.append((ti, t))
    index = np.array(index, dtype=int)

    mean, std = compute_norm_stats(dataset, layout)
    params = init_mlp(config.seed, (layout.window_dim, *config.hidden_sizes, 2))
    params = params.with_norm_stats(mean, std)

    rng = np.random.default_rng([config.seed, 2])
    plist = params_to_list(params)
    state = init_adam(plist, lr=config.lr)
    batches_per_epoch = math.ceil(len(index) / config.batch_size)
    total = config.epochs * batches_per_epoch
    history = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(index))
        for b in range(batches_per_epoch):
            sel = index[order[b * config.batch_size : (b + 1) * config.batch_size]]
            xs, ys = [], []
            for ti in np.unique(sel[:, 0]):
                ends = sel[sel[:, 0] == ti, 1]
                xs.append(_gather_windows(mats[ti], ends, h))
                ys.append(targets[ti][ends])
            x = np.vstack(xs)
            y = np.vstack(ys)
            loss, grads = loss_and_grad(list_to_params(params, plist), x, y)
            state = replace(state, lr=_lr_at(config, step, total))
            state, plist = adam_update(state, plist, grads)
            history.append(loss)
            step += 1
    params = list_to_params(params, plist)
    return Checkpoint(params, layout, config.digest(), tuple(history))


def train_stage1(dataset: Sequence[Trajectory], config: TrainConfig) -> Checkpoint:
    """Simulation pre-training: teacher forcing, accelerometer excluded."""
    if config.use_accel:
        raise ValueError("stage-1 layout must exclude the accelerometer channel")
    for traj in dataset:
        # file-loaded trajectories carry no flavor label and are accepted
        if traj.meta.source == "real-like":
            raise ValueError('stage-1 dataset must be "sim" flavor')
    return train_supervised(dataset, config)


def zero_pad_transfer(ckpt: Checkpoint, new_layout: SensorLayout,
                      stage2_dataset: Optional[Sequence[Trajectory]] = None) -> Checkpoint:
    """Widen a trained network with zero first-layer columns for accel.

    The new layout must equal the checkpoint layout plus the accelerometer
    channel.  Existing weights, biases, and normalization statistics are
    copied verbatim, so the widened network is exactly equivalent on inputs
    with the accel features stripped.  Normalization statistics for the new
    features are taken from ``stage2_dataset`` when given, else left at
    identity (they multiply zero weights either way).
    """
    old = ckpt.layout
    if old.use_accel:
        raise ValueError("checkpoint already has the accel channel")
    if not new_layout.use_accel:
        raise ValueError("new layout must enable the accel channel")
    same = (
        old.use_dp_hist == new_layout.use_dp_hist
        and old.use_actions == new_layout.use_actions
        and old.history_len == new_layout.history_len
        and old.horizon == new_layout.horizon
    )
    if not same:
        raise ValueError("layouts may differ only in the accel channel")

    h = old.history_len
    d_old, d_new = old.input_dim, new_layout.input_dim
    old_off, new_off = old.channel_offsets(), new_layout.channel_offsets()
    widths = dict(CHANNEL_SPEC)
    mapping = np.empty(h * d_old, dtype=int)
    for name, _ in old.channels():
        w = widths[name]
        for slot in range(h):
            src = slot * d_old + old_off[name]
            dst = slot * d_new + new_off[name]
            mapping[src : src + w] = np.arange(dst, dst + w)

    params = ckpt.params
    w1 = np.zeros((params.layer_sizes[1], h * d_new), dtype=params.dtype)
    w1[:, mapping] = params.weights[0]
    mean = np.zeros(h * d_new, dtype=params.dtype)
    std = np.ones(h * d_new, dtype=params.dtype)
    mean[mapping] = params.norm_mean
    std[mapping] = params.norm_std
    if stage2_dataset:
        full_mean, full_std = compute_norm_stats(stage2_dataset, new_layout)
        accel = new_layout.slots_of("accel")
        mean[accel] = full_mean[accel]
        std[accel] = full_std[accel]

    new_params = MlpParams(
        (h * d_new, *params.layer_sizes[1:]),
        (w1, *(w.copy() for w in params.weights[1:])),
        tuple(b.copy() for b in params.biases),
        mean,
        std,
    )
    return Checkpoint(new_params, new_layout, ckpt.config_digest, ckpt.loss_history)


def _unroll(
    predict: Callable[[np.ndarray, int], np.ndarray],
    layout: SensorLayout,
    traj: Trajectory,
    start_xy: np.ndarray,
    t0: int,
    t1: int,
    collect: bool = False,
):
    """Autoregressive position propagation over frames [t0, t1).

    Windows are left-padded by repeating frame t0; the dp-history channel
    is recomputed from the propagated positions with displacement-from-start
    warm-up at t0.  Returns (positions, windows) where positions[k] is the
    estimate for frame t0+k and windows collects (frame, feature) pairs when
    requested.
    """
    h, horizon = layout.history_len, layout.horizon
    lag = int(round(traj.rate_hz * DP_LAG_SECONDS))
    mat = np.array(traj.feature_matrix(layout))
    yaws = traj.sensor_yaws()
    if layout.use_dp_hist:
        dp_cols = slice(layout.channel_offsets()["dp_hist"], layout.channel_offsets()["dp_hist"] + 2)
    m = t1 - t0
    pos = np.empty((m, 2))
    pos[0] = start_xy
    filled = 0  # local index up to which positions are defined
    dp_done = -1
    windows = []
    for t in range(t0, t1 - horizon, horizon):
        k = t - t0
        if layout.use_dp_hist:
            for s in range(dp_done + 1, k + 1):
                i0 = max(0, s - lag)
                d = pos[s] - pos[i0]
                c, sn = math.cos(yaws[t0 + s]), math.sin(yaws[t0 + s])
                mat[t0 + s, dp_cols] = (c * d[0] + sn * d[1], -sn * d[0] + c * d[1])
            dp_done = k
        idx = np.clip(np.arange(t - h + 1, t + 1), t0, None)
        x = mat[idx].reshape(-1)
        if collect:
            windows.append((t, x.copy()))
        delta = predict(x, t)
        c, sn = math.cos(yaws[t]), math.sin(yaws[t])
        world = np.array([c * delta[0] - sn * delta[1], sn * delta[0] + c * delta[1]])
        for j in range(1, horizon + 1):
            pos[k + j] = pos[k] + world * (j / horizon)
        filled = k + horizon
    pos[filled + 1 :] = pos[filled]
    return pos, windows


def rollout(
    ckpt: Checkpoint,
    traj: Trajectory,
    start: Pose2D,
    predict_fn: Optional[Callable[[np.ndarray, int], np.ndarray]] = None,
) -> np.ndarray:
    """Dead-reckon a trajectory's sensors through the network.

    At every step the dp-history feature is computed from the network's own
    integrated position estimates; predicted body-frame increments are
    rotated through the sensor yaw and accumulated from the start pose.
    ``predict_fn(features, frame) -> (2,)`` overrides the network (used for
    oracle checks).  Returns (n, 2) predicted positions.
    """
    if len(traj) <= ckpt.layout.horizon:
        raise ValueError("trajectory shorter than one prediction horizon")
    predict = predict_fn or (lambda x, t: forward(ckpt.params, x))
    pos, _ = _unroll(predict, ckpt.layout, traj, np.array([start.x, start.y]), 0, len(traj))
    return pos


def rollout_poses(ckpt: Checkpoint, traj: Trajectory, start: Optional[Pose2D] = None,
                  predict_fn=None) -> np.ndarray:
    """(n, 3) rollout poses [x, y, yaw]; yaw comes from the rotation channel."""
    if start is None:
        if traj.has_gt:
            gt = traj.gt_poses()[0]
            start = Pose2D(gt[0], gt[1], gt[2])
        else:
            start = Pose2D(0.0, 0.0, traj.sensor_yaws()[0])
    pos = rollout(ckpt, traj, start, predict_fn)
    return np.column_stack([pos, traj.sensor_yaws()])


def teacher_forced_increments(ckpt: Checkpoint, traj: Trajectory):
    """(predicted, ground-truth) increments with all inputs from stored channels."""
    layout = ckpt.layout
    h, horizon = layout.history_len, layout.horizon
    if len(traj) < h + horizon:
        raise ValueError("trajectory too short for the history window")
    mat = traj.feature_matrix(layout)
    ends = np.arange(h - 1, len(traj) - horizon)
    x = _gather_windows(mat, ends, h)
    pred = forward_batch(ckpt.params, x)
    return pred, gt_increment_series(traj, horizon)[ends]


def train_stage2(
    dataset: Sequence[Trajectory],
    ckpt: Checkpoint,
    config: TrainConfig,
    holdout: Optional[Sequence[Trajectory]] = None,
) -> Checkpoint:
    """Autoregressive fine-tuning on real-like data.

    Trajectory segments are unrolled exactly like deployment rollouts
    restarted at the segment start; the dp-history input at every step is
    the displacement of the network's own integrated estimates, treated as
    a constant in the gradient.  The loss is the mean squared error of the
    per-step increments over each segment, one optimizer update per segment.

    The mean first-frame-aligned rollout ATE over ``holdout`` (the training
    trajectories when no holdout is given) is recorded on the returned
    checkpoint.
    """
    from .metrics import ate_first_frame  # local import to avoid a cycle

    if not dataset:
        raise ValueError("empty dataset")
    layout = ckpt.layout
    if not layout.use_accel:
        raise ValueError("stage-2 checkpoint must include the accel channel; "
                         "run zero_pad_transfer first")
    if config.layout() != layout:
        raise ValueError("config layout flags disagree with the checkpoint layout")
    if config.epochs == 0:
        return ckpt

    h, horizon = layout.history_len, layout.horizon
    rng = np.random.default_rng([config.seed, 3])
    params = ckpt.params
    plist = params_to_list(params)
    state = init_adam(plist, lr=config.lr)

    jobs = []
    for epoch in range(config.epochs):
        for ti, traj in enumerate(dataset):
            n = len(traj)
            if n < h + horizon + 1:
                raise ValueError(f"trajectory {ti} too short for fine-tuning")
            seg = min(config.segment_len, n - horizon - 1)
            n_seg = max(1, n // config.segment_len)
            starts = rng.integers(0, n - seg - horizon + 1, size=n_seg)
            jobs.extend((ti, int(s0), seg) for s0 in starts)

    history = []
    total = len(jobs)
    targets = [gt_increment_series(traj, horizon) for traj in dataset]
    positions = [traj.gt_positions() for traj in dataset]
    for step, (ti, s0, seg) in enumerate(jobs):
        cur = list_to_params(params, plist)
        predict = lambda x, t: forward(cur, x)
        _, windows = _unroll(
            predict, layout, dataset[ti], positions[ti][s0], s0, s0 + seg + horizon, collect=True
        )
        x = np.array([w for _, w in windows])
        y = targets[ti][[t for t, _ in windows]]
        loss, grads = loss_and_grad(cur, x, y)
        state = replace(state, lr=_lr_at(config, step, total))
        state, plist = adam_update(state, plist, grads)
        history.append(loss)

    params = list_to_params(params, plist)
    tuned = Checkpoint(params, layout, config.digest(), ckpt.loss_history + tuple(history))
    eval_set = holdout if holdout is not None else dataset
    ates = []
    for traj in eval_set:
        pred = rollout_poses(tuned, traj)
        ate, _ = ate_first_frame(traj.gt_poses(), pred)
        ates.append(ate)
    return replace(tuned, holdout_ate=float(np.mean(ates)))

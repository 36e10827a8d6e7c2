"""Core observation/pose/trajectory types and window flattening.

Conventions used throughout the package:
    - planar world frame, yaw counter-clockwise from +x
    - body frame = robot frame rotated by yaw about z
    - displacement targets and dp-history features are expressed in the
      body frame at the *current* timestamp
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi

# (name, width) of every channel in fixed flattening order; optional
# channels are dropped when the layout disables them.
CHANNEL_SPEC = (
    ("cmd_vel", 3),
    ("gyro", 3),
    ("accel", 3),
    ("joint_pos", 12),
    ("joint_vel", 12),
    ("rot", 9),
    ("dp_hist", 2),
    ("actions", 11),
)
OPTIONAL_CHANNELS = {"accel": "use_accel", "dp_hist": "use_dp_hist", "actions": "use_actions"}


def wrap_angle(yaw: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    w = (yaw + math.pi) % TWO_PI - math.pi
    if w <= -math.pi:
        w += TWO_PI
    return w


def rot2(yaw: float) -> np.ndarray:
    """2x2 rotation matrix for a yaw angle."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def rot3(yaw: float) -> np.ndarray:
    """3x3 rotation about z (planar robot attitude)."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_of_rot(rot: np.ndarray) -> float:
    """Yaw angle of the planar part of a 3x3 rotation matrix."""
    return math.atan2(rot[1, 0], rot[0, 0])


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; yaw is stored normalized to (-pi, pi]."""

    x: float
    y: float
    yaw: float

    def __post_init__(self):
        for v in (self.x, self.y, self.yaw):
            if not math.isfinite(v):
                raise ValueError("pose components must be finite")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation(self) -> np.ndarray:
        return rot2(self.yaw)


@dataclass(frozen=True)
class SensorLayout:
    """Active sensor channels and the derived flattened input geometry.

    ``input_dim`` is the per-frame feature width; a flattened window is
    ``history_len * input_dim`` long, frame-major with the oldest frame
    first.
    """

    use_accel: bool = False
    use_dp_hist: bool = True
    use_actions: bool = True
    history_len: int = 50
    horizon: int = 1

    def __post_init__(self):
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def channels(self) -> tuple:
        """Active (name, width) pairs in flattening order."""
        out = []
        for name, width in CHANNEL_SPEC:
            flag = OPTIONAL_CHANNELS.get(name)
            if flag is None or getattr(self, flag):
                out.append((name, width))
        return tuple(out)

    def channel_offsets(self) -> dict:
        """Start offset of each active channel inside one frame block."""
        offsets, pos = {}, 0
        for name, width in self.channels():
            offsets[name] = pos
            pos += width
        return offsets

    @property
    def input_dim(self) -> int:
        return sum(w for _, w in self.channels())

    @property
    def window_dim(self) -> int:
        return self.history_len * self.input_dim

    def slots_of(self, name: str) -> np.ndarray:
        """Flattened-window indices of one channel across all history frames."""
        offsets = self.channel_offsets()
        if name not in offsets:
            raise KeyError(f"channel {name!r} not active in layout")
        width = dict(CHANNEL_SPEC)[name]
        start = offsets[name]
        d = self.input_dim
        return np.concatenate(
            [np.arange(h * d + start, h * d + start + width) for h in range(self.history_len)]
        )


def _check_vec(name: str, v, width: int) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (width,):
        raise ValueError(f"{name} must have shape ({width},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ObservationFrame:
    """One 50 Hz sample of every proprioceptive channel plus optional pose.

    ``rot`` is the 3x3 body-to-world rotation; its rows must be orthonormal
    to 1e-9.  ``gt_pose`` may be None for inference-only data.
    """

    cmd_vel: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray
    joint_pos: np.ndarray
    joint_vel: np.ndarray
    rot: np.ndarray
    dp_hist: np.ndarray
    actions: np.ndarray
    gt_pose: Optional[Pose2D] = None

    def __post_init__(self):
        object.__setattr__(self, "cmd_vel", _check_vec("cmd_vel", self.cmd_vel, 3))
        object.__setattr__(self, "gyro", _check_vec("gyro", self.gyro, 3))
        object.__setattr__(self, "accel", _check_vec("accel", self.accel, 3))
        object.__setattr__(self, "joint_pos", _check_vec("joint_pos", self.joint_pos, 12))
        object.__setattr__(self, "joint_vel", _check_vec("joint_vel", self.joint_vel, 12))
        object.__setattr__(self, "dp_hist", _check_vec("dp_hist", self.dp_hist, 2))
        object.__setattr__(self, "actions", _check_vec("actions", self.actions, 11))
        rot = np.asarray(self.rot, dtype=float)
        if rot.shape == (9,):
            rot = rot.reshape(3, 3)
        if rot.shape != (3, 3):
            raise ValueError(f"rot must be 3x3, got {rot.shape}")
        if not np.all(np.isfinite(rot)):
            raise ValueError("rot contains non-finite values")
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-9:
            raise ValueError("rot rows are not orthonormal (tolerance 1e-9)")
        object.__setattr__(self, "rot", rot)

    @property
    def yaw(self) -> float:
        return yaw_of_rot(self.rot)

    def channel(self, name: str) -> np.ndarray:
        if name == "rot":
            return self.rot.reshape(9)
        return getattr(self, name)


@dataclass(frozen=True)
class TrajectoryMeta:
    seed: Optional[int] = None
    duration: Optional[float] = None
    source: str = "sim"


class Trajectory:
    """Time-ordered frame sequence with a fixed sampling rate.

    Immutable after construction; per-layout feature matrices are cached
    so repeated window flattening stays cheap.
    """

    def __init__(self, frames, rate_hz: float = 50.0, meta: TrajectoryMeta = TrajectoryMeta()):
        frames = tuple(frames)
        if not frames:
            raise ValueError("trajectory needs at least one frame")
        if rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if meta.duration is not None and abs(len(frames) - rate_hz * meta.duration) > 1:
            raise ValueError(
                f"frame count {len(frames)} inconsistent with "
                f"rate {rate_hz} Hz x duration {meta.duration} s"
            )
        self.frames = frames
        self.rate_hz = float(rate_hz)
        self.meta = meta
        self._matrices: dict = {}
        self._gt = None

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    @property
    def duration(self) -> float:
        return len(self.frames) / self.rate_hz

    @property
    def has_gt(self) -> bool:
        return all(f.gt_pose is not None for f in self.frames)

    def gt_positions(self) -> np.ndarray:
        """(n, 2) ground-truth positions; raises when any pose is missing."""
        if not self.has_gt:
            raise ValueError("trajectory has frames without ground-truth poses")
        if self._gt is None:
            xy = np.array([[f.gt_pose.x, f.gt_pose.y] for f in self.frames])
            yaw = np.array([f.gt_pose.yaw for f in self.frames])
            self._gt = (xy, yaw)
        return self._gt[0]

    def gt_yaws(self) -> np.ndarray:
        self.gt_positions()
        return self._gt[1]

    def gt_poses(self) -> np.ndarray:
        """(n, 3) array of [x, y, yaw] ground-truth poses."""
        return np.column_stack([self.gt_positions(), self.gt_yaws()])

    def sensor_yaws(self) -> np.ndarray:
        """Yaw angles extracted from the rotation channel."""
        return np.array([f.yaw for f in self.frames])

    def feature_matrix(self, layout: SensorLayout) -> np.ndarray:
        """(n, input_dim) per-frame feature rows for the active channels."""
        key = (layout.use_accel, layout.use_dp_hist, layout.use_actions)
        cached = self._matrices.get(key)
        if cached is None:
            cols = [np.array([f.channel(name) for f in self.frames]) for name, _ in layout.channels()]
            cached = np.hstack(cols)
            cached.flags.writeable = False
            self._matrices[key] = cached
        return cached


def flatten_window(traj: Trajectory, t: int, layout: SensorLayout) -> np.ndarray:
    """Flatten the observation window ending at frame ``t``.

    Output is frame-major (oldest frame first); within a frame the channel
    order is cmd_vel, gyro, [accel], joint_pos, joint_vel, rot, [dp_hist],
    [actions].
    """
    h = layout.history_len
    if t < h - 1 or t >= len(traj):
        raise IndexError(f"window ending at frame {t} out of range (H={h}, n={len(traj)})")
    mat = traj.feature_matrix(layout)
    if mat.shape[1] != layout.input_dim:
        raise ValueError("layout/frame dimension mismatch")
    return mat[t - h + 1 : t + 1].reshape(-1).copy()


def body_displacement(positions: np.ndarray, yaws: np.ndarray, t: int, lag: int) -> np.ndarray:
    """Displacement from frame max(0, t-lag) to t, in the body frame at t."""
    i0 = max(0, t - lag)
    d = positions[t] - positions[i0]
    return rot2(float(yaws[t])).T @ d


def dp_history(traj: Trajectory, t: int, lag: int) -> np.ndarray:
    """Ground-truth differential position over ``lag`` frames, body frame at t.

    For t < lag the displacement is taken from the trajectory start so the
    channel stays continuous through the warm-up region.
    """
    if t < 0 or t >= len(traj):
        raise IndexError(f"frame {t} out of range")
    if lag < 1:
        raise ValueError("lag must be >= 1")
    positions = traj.gt_positions()
    yaws = traj.sensor_yaws()
    return body_displacement(positions, yaws, t, lag)

"""Deterministic synthetic legged-locomotion data.

Stands in for a physics simulator and a motion-capture rig: unicycle
kinematics with first-order command tracking generate ground-truth poses,
and every proprioceptive channel is synthesized from the same state so the
mapping from observations to displacement is learnable by construction.

Two flavors:
    "sim"       clean sensors, accelerometer from numerical differentiation
    "real-like" gyro/joint/accel white noise, accel bias random walk, and
                noisy dp-history feedback

The kinematic step holds body velocity constant over each tick and applies
the exact rigid arc, so constant-command paths are analytic (straight lines
and circles) and per-step ground-truth increments integrate back to the
ground-truth positions exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datamodel import (
    ObservationFrame,
    Pose2D,
    Trajectory,
    TrajectoryMeta,
    wrap_angle,
)

GRAVITY = 9.81
# m of lever arm converting yaw rate into an equivalent gait speed
TURN_SPEED_ARM = 0.3

CMD_LIMITS = np.array([1.0, 0.5, 1.0])  # |v_x|, |v_y|, |omega_z| bounds
SEGMENT_RANGE_S = (1.0, 4.0)


def _default_amp() -> np.ndarray:
    return np.linspace(0.25, 0.47, 12)


def _default_phase() -> np.ndarray:
    return (np.arange(12) * (2.0 * math.pi * 5.0 / 12.0)) % (2.0 * math.pi)


@dataclass(frozen=True)
class GaitSpec:
    """Kinematic gait parameters for the synthetic robot."""

    gait_freq: float = 2.0
    joint_amp: np.ndarray = field(default_factory=_default_amp)
    joint_phase: np.ndarray = field(default_factory=_default_phase)
    vel_tracking_tau: float = 0.3
    body_sway_amp: float = 0.06

    def __post_init__(self):
        if self.gait_freq <= 0:
            raise ValueError("gait_freq must be positive")
        if self.vel_tracking_tau <= 0:
            raise ValueError("vel_tracking_tau must be positive")
        amp = np.asarray(self.joint_amp, dtype=float)
        phase = np.asarray(self.joint_phase, dtype=float)
        if amp.shape != (12,) or phase.shape != (12,):
            raise ValueError("joint_amp and joint_phase must be 12-vectors")
        object.__setattr__(self, "joint_amp", amp)
        object.__setattr__(self, "joint_phase", phase)


@dataclass(frozen=True)
class NoiseSpec:
    """Sensor corruption levels for the 'real-like' flavor."""

    gyro_std: float = 0.03
    accel_std: float = 0.25
    accel_bias_walk_std: float = 0.05
    joint_std: float = 0.01
    dp_feedback_std: float = 0.03

    def __post_init__(self):
        for name in ("gyro_std", "accel_std", "accel_bias_walk_std", "joint_std", "dp_feedback_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def zero(cls) -> "NoiseSpec":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


def sample_command_profile(seed: int, duration: float, rate: float = 50.0) -> np.ndarray:
    """Piecewise-constant [v_x, v_y, omega_z] commands, one row per frame.

    Segments last 1-4 s; values are uniform within the command limits.
    Deterministic given the seed.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration * rate))
    rng = np.random.default_rng([int(seed), 0])
    cmds = np.zeros((n, 3))
    pos = 0
    while pos < n:
        seg = max(1, int(round(rng.uniform(*SEGMENT_RANGE_S) * rate)))
        vals = rng.uniform(-CMD_LIMITS, CMD_LIMITS)
        cmds[pos : pos + seg] = vals
        pos += seg
    return cmds


def _arc_matrix(omega: float, dt: float) -> np.ndarray:
    """Integral of Rot(omega*s) over one tick: exact rigid-arc displacement map."""
    if abs(omega) < 1e-8:
        a = dt
        b = omega * dt * dt / 2.0
    else:
        a = math.sin(omega * dt) / omega
        b = (1.0 - math.cos(omega * dt)) / omega
    return np.array([[a, -b], [b, a]])


def generate_trajectory(
    seed: int,
    duration: float,
    gait: GaitSpec = GaitSpec(),
    noise: NoiseSpec = NoiseSpec(),
    flavor: str = "sim",
    rate: float = 50.0,
    commands: np.ndarray | None = None,
) -> Trajectory:
    """Generate one trajectory with ground truth and all sensor channels.

    ``commands`` overrides the sampled command profile (shape (n, 3));
    useful for constant-command analytic cases.  Ground-truth poses depend
    only on (seed, gait, commands), never on the noise draw, so "sim" and
    "real-like" trajectories with one seed share their poses.
    """
    if flavor not in ("sim", "real-like"):
        raise ValueError(f"unknown flavor {flavor!r}")
    if duration < 2.0:
        raise ValueError("duration must be >= 2 s")
    n = int(round(duration * rate))
    dt = 1.0 / rate
    if commands is None:
        commands = sample_command_profile(seed, duration, rate)
    commands = np.asarray(commands, dtype=float)
    if commands.shape != (n, 3):
        raise ValueError(f"commands must have shape ({n}, 3)")

    alpha = math.exp(-dt / gait.vel_tracking_tau)
    track = np.zeros((n, 3))  # attained [v_x, v_y, omega] before sway
    prev = np.zeros(3)
    for k in range(n):
        prev = commands[k] + (prev - commands[k]) * alpha
        track[k] = prev

    speed = np.hypot(track[:, 0], track[:, 1]) + TURN_SPEED_ARM * np.abs(track[:, 2])
    phase = 2.0 * math.pi * gait.gait_freq * dt * np.arange(n)
    sway = gait.body_sway_amp * speed * np.sin(phase)
    v_body = np.column_stack([track[:, 0], track[:, 1] + sway])
    omega = track[:, 2]

    xy = np.zeros((n, 2))
    yaw = np.zeros(n)
    for k in range(n - 1):
        c, s = math.cos(yaw[k]), math.sin(yaw[k])
        step = _arc_matrix(omega[k], dt) @ v_body[k]
        xy[k + 1, 0] = xy[k, 0] + c * step[0] - s * step[1]
        xy[k + 1, 1] = xy[k, 1] + s * step[0] + c * step[1]
        yaw[k + 1] = yaw[k] + omega[k] * dt

    # joint sinusoids scaled by attained speed; actions are the clean
    # joint targets one tick ahead
    arg = phase[:, None] + gait.joint_phase[None, :]
    q_clean = gait.joint_amp[None, :] * speed[:, None] * np.sin(arg)
    qd_clean = gait.joint_amp[None, :] * speed[:, None] * (2.0 * math.pi * gait.gait_freq) * np.cos(arg)
    actions = np.vstack([q_clean[1:], q_clean[-1:]])[:, :11]

    accel = np.zeros((n, 3))
    accel[1:-1, :2] = (v_body[2:] - v_body[:-2]) / (2.0 * dt)
    accel[0, :2] = (v_body[1] - v_body[0]) / dt
    accel[-1, :2] = (v_body[-1] - v_body[-2]) / dt
    accel[:, 2] = GRAVITY

    gyro = np.zeros((n, 3))
    gyro[:, 2] = omega

    lag = int(round(rate))
    c, s = np.cos(yaw), np.sin(yaw)
    d = xy - xy[np.maximum(np.arange(n) - lag, 0)]
    dp = np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])

    q, qd = q_clean, qd_clean
    if flavor == "real-like":
        rng = np.random.default_rng([int(seed), 1])
        gyro = gyro + rng.normal(0.0, noise.gyro_std, (n, 3))
        bias = np.cumsum(rng.normal(0.0, noise.accel_bias_walk_std * math.sqrt(dt), (n, 3)), axis=0)
        accel = accel + bias + rng.normal(0.0, noise.accel_std, (n, 3))
        q = q + rng.normal(0.0, noise.joint_std, (n, 12))
        # velocity noise modeled as differenced position noise
        qd = qd + rng.normal(0.0, noise.joint_std * rate * math.sqrt(2.0), (n, 12))
        dp = dp + rng.normal(0.0, noise.dp_feedback_std, (n, 2))

    frames = []
    for k in range(n):
        ck, sk = math.cos(yaw[k]), math.sin(yaw[k])
        rot = np.array([[ck, -sk, 0.0], [sk, ck, 0.0], [0.0, 0.0, 1.0]])
        frames.append(
            ObservationFrame(
                cmd_vel=commands[k],
                gyro=gyro[k],
                accel=accel[k],
                joint_pos=q[k],
                joint_vel=qd[k],
                rot=rot,
                dp_hist=dp[k],
                actions=actions[k],
                gt_pose=Pose2D(xy[k, 0], xy[k, 1], wrap_angle(yaw[k])),
            )
        )
    meta = TrajectoryMeta(seed=int(seed), duration=duration, source=flavor)
    return Trajectory(frames, rate_hz=rate, meta=meta)


def gt_increment(traj: Trajectory, t: int, horizon: int) -> np.ndarray:
    """Ground-truth displacement from frame t to t+horizon, body frame at t."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if t < 0 or t + horizon >= len(traj):
        raise IndexError(f"increment at frame {t} with horizon {horizon} out of range")
    xy = traj.gt_positions()
    yaw = traj.gt_yaws()
    d = xy[t + horizon] - xy[t]
    c, s = math.cos(yaw[t]), math.sin(yaw[t])
    return np.array([c * d[0] + s * d[1], -s * d[0] + c * d[1]])


def gt_increment_series(traj: Trajectory, horizon: int = 1) -> np.ndarray:
    """(n-horizon, 2) ground-truth increments for every valid start frame."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    xy = traj.gt_positions()
    yaw = traj.gt_yaws()[: len(traj) - horizon]
    d = xy[horizon:] - xy[: len(traj) - horizon]
    c, s = np.cos(yaw), np.sin(yaw)
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])

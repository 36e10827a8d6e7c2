"""Trajectory evaluation: dead-reckoning integration, RPE, and ATE.

ATE comes in two variants: first-frame alignment (ate_o) pins the predicted
start pose to the ground-truth start pose; optimal alignment (ate_u) solves
the rigid least-squares registration in closed form via the cross-covariance
decomposition (no scale).  Both report RMSE of position residuals after
applying the recovered transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import Pose2D, Trajectory, rot2


@dataclass(frozen=True)
class AlignmentTransform:
    """Rigid planar transform p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (2, 2) or t.shape != (2,):
            raise ValueError("rotation must be 2x2 and translation a 2-vector")
        if np.max(np.abs(r @ r.T - np.eye(2))) > 1e-12 or abs(np.linalg.det(r) - 1.0) > 1e-12:
            raise ValueError("rotation must be orthonormal with det +1 (tolerance 1e-12)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @property
    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    @classmethod
    def identity(cls) -> "AlignmentTransform":
        return cls(np.eye(2), np.zeros(2))


@dataclass(frozen=True)
class EvalReport:
    """Metric bundle for one ground-truth/prediction trajectory pair."""

    ate_o: float
    ate_u: float
    rpe: float
    ate_o_align: AlignmentTransform
    ate_u_align: AlignmentTransform
    length_m: float
    duration_s: float

    def __post_init__(self):
        for name in ("ate_o", "ate_u", "rpe", "length_m", "duration_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.ate_u > self.ate_o + 1e-9:
            raise ValueError("optimal alignment error exceeds first-frame alignment error")


def _rmse(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum(residuals * residuals, axis=1))))


def integrate_increments(increments: np.ndarray, yaws: np.ndarray, start: Pose2D) -> np.ndarray:
    """Accumulate body-frame increments through given yaws.

    p_{k+1} = p_k + Rot(yaw_k) @ inc_k; returns (n+1, 2) positions starting
    at the start pose.
    """
    inc = np.asarray(increments, dtype=float)
    yaw = np.asarray(yaws, dtype=float)
    if inc.ndim != 2 or inc.shape[1] != 2 or yaw.shape != (inc.shape[0],):
        raise ValueError("increments must be (n, 2) and yaws (n,)")
    c, s = np.cos(yaw), np.sin(yaw)
    steps = np.column_stack([c * inc[:, 0] - s * inc[:, 1], s * inc[:, 0] + c * inc[:, 1]])
    out = np.empty((inc.shape[0] + 1, 2))
    out[0] = (start.x, start.y)
    np.cumsum(steps, axis=0, out=out[1:])
    out[1:] += out[0]
    return out


def rpe(gt_increments: np.ndarray, pred_increments: np.ndarray) -> float:
    """RMSE of per-interval displacement errors."""
    a = np.asarray(gt_increments, dtype=float)
    b = np.asarray(pred_increments, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 2:
        raise ValueError("increment sequences must be equal-shape (n, 2) arrays")
    if a.shape[0] == 0:
        raise ValueError("need at least one increment")
    return _rmse(a - b)


def body_increments(poses: np.ndarray) -> np.ndarray:
    """Per-step displacements of an (n, 3) pose array, body frame at each step."""
    poses = np.asarray(poses, dtype=float)
    d = poses[1:, :2] - poses[:-1, :2]
    yaw = poses[:-1, 2]
    c, s = np.cos(yaw), np.sin(yaw)
    return np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])


def _check_pose_pair(gt_poses, pred_poses, min_len=2):
    gt = np.asarray(gt_poses, dtype=float)
    pred = np.asarray(pred_poses, dtype=float)
    if gt.shape != pred.shape or gt.ndim != 2:
        raise ValueError("pose arrays must have identical (n, k) shapes")
    if gt.shape[0] < min_len:
        raise ValueError(f"need at least {min_len} poses")
    return gt, pred


def ate_first_frame(gt_poses: np.ndarray, pred_poses: np.ndarray):
    """ATE after mapping the predicted first pose onto the ground-truth one.

    Pose arrays are (n, 3) rows of [x, y, yaw].  Returns (rmse, transform).
    """
    gt, pred = _check_pose_pair(gt_poses, pred_poses)
    if gt.shape[1] != 3:
        raise ValueError("poses must be (n, 3) rows of [x, y, yaw]")
    r = rot2(gt[0, 2] - pred[0, 2])
    t = gt[0, :2] - r @ pred[0, :2]
    transform = AlignmentTransform(r, t)
    return _rmse(gt[:, :2] - transform.apply(pred[:, :2])), transform


def umeyama_align(gt_points: np.ndarray, pred_points: np.ndarray):
    """Closed-form rigid registration minimizing sum ||gt - (R pred + t)||^2.

    No scale is estimated.  All-coincident predicted points degenerate to a
    translation-only alignment.  Returns (rmse, transform).
    """
    gt, pred = _check_pose_pair(gt_points, pred_points)
    gt, pred = gt[:, :2], pred[:, :2]
    gc, pc = gt.mean(axis=0), pred.mean(axis=0)
    g0, p0 = gt - gc, pred - pc
    cov = (g0.T @ p0) / gt.shape[0]
    if not np.any(cov):
        transform = AlignmentTransform(np.eye(2), gc - pc)
    else:
        u, _, vt = np.linalg.svd(cov)
        d = np.sign(np.linalg.det(u @ vt))
        r = u @ np.diag([1.0, d]) @ vt
        transform = AlignmentTransform(r, gc - r @ pc)
    return _rmse(gt - transform.apply(pred)), transform


def baseline_cmd_integration(traj: Trajectory) -> np.ndarray:
    """Dead-reckon the commanded planar velocity through ground-truth yaw."""
    xy = traj.gt_positions()
    yaw = traj.gt_yaws()
    cmd = np.array([f.cmd_vel[:2] for f in traj.frames])
    inc = cmd[:-1] * traj.dt
    return integrate_increments(inc, yaw[:-1], Pose2D(xy[0, 0], xy[0, 1], yaw[0]))


def evaluate_trajectories(gt_poses: np.ndarray, pred_poses: np.ndarray,
                          rate_hz: float = 50.0) -> EvalReport:
    """Full metric bundle for a gt/pred pose pair ((n, 3) arrays)."""
    gt, pred = _check_pose_pair(gt_poses, pred_poses)
    ate_o, align_o = ate_first_frame(gt, pred)
    ate_u, align_u = umeyama_align(gt[:, :2], pred[:, :2])
    err = rpe(body_increments(gt), body_increments(pred))
    length = float(np.sum(np.linalg.norm(np.diff(gt[:, :2], axis=0), axis=1)))
    return EvalReport(
        ate_o=ate_o,
        ate_u=ate_u,
        rpe=err,
        ate_o_align=align_o,
        ate_u_align=align_u,
        length_m=length,
        duration_s=gt.shape[0] / rate_hz,
    )

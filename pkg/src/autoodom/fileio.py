"""File formats: trajectory CSV, checkpoint blobs, path CSV, config text.

Trajectory files are UTF-8 CSV with a schema line, a column header, and one
row per 50 Hz frame; floats are written with 17 significant digits so
values round-trip exactly.  The dp-history channel is derived data (1 s
displacement in the body frame) and is reconstructed from the ground-truth
columns on load rather than stored.

Checkpoints are a textual header (magic, layer sizes, layout flags, history
length, horizon, norm-stat length) followed by little-endian float32 blobs:
per layer weights then bias, then normalization mean and std.

All writes go through a write-then-rename so readers never observe a
partial file.
"""

from __future__ import annotations

import os
import tempfile
from typing import Optional

import numpy as np

from .datamodel import (
    ObservationFrame,
    Pose2D,
    SensorLayout,
    Trajectory,
    TrajectoryMeta,
)
from .net import MlpParams
from .train import Checkpoint

TRAJ_SCHEMA = "autoodom.traj.v1"
PATH_SCHEMA = "autoodom.path.v1"
CKPT_MAGIC = "AUTOODOM-CKPT/1"

_BASE_COLUMNS = (
    ["t", "cmd_vx", "cmd_vy", "cmd_wz", "gyro_x", "gyro_y", "gyro_z",
     "accel_x", "accel_y", "accel_z"]
    + [f"q_{i}" for i in range(12)]
    + [f"dq_{i}" for i in range(12)]
    + [f"rot_{i}{j}" for i in range(3) for j in range(3)]
    + [f"act_{i}" for i in range(11)]
)
_GT_COLUMNS = ["gt_x", "gt_y", "gt_yaw"]


class DataFormatError(Exception):
    """A file failed schema or consistency validation."""


def atomic_write(path: str, data) -> None:
    """Write bytes or text, then rename into place."""
    mode = "wb" if isinstance(data, bytes) else "w"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_trajectory(traj: Trajectory, path: str) -> None:
    """Write a trajectory CSV; ground-truth columns only when poses exist."""
    with_gt = traj.has_gt
    columns = _BASE_COLUMNS + (_GT_COLUMNS if with_gt else [])
    lines = [f"schema={TRAJ_SCHEMA},rate_hz={traj.rate_hz:g}", ",".join(columns)]
    dt = traj.dt
    for k, f in enumerate(traj.frames):
        row = [k * dt]
        row.extend(f.cmd_vel)
        row.extend(f.gyro)
        row.extend(f.accel)
        row.extend(f.joint_pos)
        row.extend(f.joint_vel)
        row.extend(f.rot.reshape(9))
        row.extend(f.actions)
        if with_gt:
            row.extend((f.gt_pose.x, f.gt_pose.y, f.gt_pose.yaw))
        lines.append(",".join(_fmt(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def _parse_schema_line(line: str, path: str) -> dict:
    out = {}
    for item in line.strip().split(","):
        if "=" not in item:
            raise DataFormatError(f"{path}: malformed schema line {line!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def load_trajectory(path: str) -> Trajectory:
    """Parse a trajectory CSV; dp-history is rebuilt from ground truth."""
    if not os.path.exists(path):
        raise DataFormatError(f"{path}: no such file")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if len(lines) < 2:
        raise DataFormatError(f"{path}: missing schema or column header")
    header = _parse_schema_line(lines[0], path)
    if header.get("schema") != TRAJ_SCHEMA:
        raise DataFormatError(
            f"{path}: wrong header version {header.get('schema')!r}, expected {TRAJ_SCHEMA!r}"
        )
    try:
        rate = float(header["rate_hz"])
    except (KeyError, ValueError):
        raise DataFormatError(f"{path}: schema line lacks a valid rate_hz") from None

    columns = lines[1].split(",")
    with_gt = len(columns) == len(_BASE_COLUMNS) + 3
    expected = _BASE_COLUMNS + (_GT_COLUMNS if with_gt else [])
    if columns != expected:
        missing = [c for c in expected if c not in columns]
        if missing:
            raise DataFormatError(f"{path}: missing column {missing[0]!r}")
        raise DataFormatError(f"{path}: unexpected column layout")

    rows = np.empty((len(lines) - 2, len(columns)))
    for i, line in enumerate(lines[2:]):
        parts = line.split(",")
        if len(parts) != len(columns):
            raise DataFormatError(f"{path}: row {i} has {len(parts)} fields, expected {len(columns)}")
        try:
            rows[i] = [float(p) for p in parts]
        except ValueError:
            raise DataFormatError(f"{path}: row {i} contains a non-numeric field") from None
    if rows.size and not np.all(np.isfinite(rows)):
        raise DataFormatError(f"{path}: non-finite values present")
    if rows.shape[0] == 0:
        raise DataFormatError(f"{path}: no data rows")

    n = rows.shape[0]
    lag = int(round(rate))
    if with_gt:
        xy = rows[:, -3:-1]
        yaw = rows[:, -1]
        idx = np.maximum(np.arange(n) - lag, 0)
        d = xy - xy[idx]
        c, s = np.cos(yaw), np.sin(yaw)
        dp = np.column_stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]])
    else:
        dp = np.zeros((n, 2))

    frames = []
    for k in range(n):
        r = rows[k]
        try:
            frames.append(
                ObservationFrame(
                    cmd_vel=r[1:4],
                    gyro=r[4:7],
                    accel=r[7:10],
                    joint_pos=r[10:22],
                    joint_vel=r[22:34],
                    rot=r[34:43].reshape(3, 3),
                    dp_hist=dp[k],
                    actions=r[43:54],
                    gt_pose=Pose2D(r[54], r[55], r[56]) if with_gt else None,
                )
            )
        except ValueError as exc:
            raise DataFormatError(f"{path}: row {k}: {exc}") from None
    return Trajectory(frames, rate_hz=rate, meta=TrajectoryMeta(source="file"))


def save_path_csv(poses: np.ndarray, rate_hz: float, path: str) -> None:
    """Write an (n, 3) pose track as a predicted-path CSV."""
    poses = np.asarray(poses, dtype=float)
    if poses.ndim != 2 or poses.shape[1] != 3:
        raise ValueError("poses must be an (n, 3) array of [x, y, yaw]")
    dt = 1.0 / rate_hz
    lines = [f"schema={PATH_SCHEMA},rate_hz={rate_hz:g}", "t,x,y,yaw"]
    for k, (x, y, yaw) in enumerate(poses):
        lines.append(",".join(_fmt(v) for v in (k * dt, x, y, yaw)))
    atomic_write(path, "\n".join(lines) + "\n")


def load_path_csv(path: str):
    """Read a predicted-path CSV; returns ((n, 3) poses, rate_hz)."""
    if not os.path.exists(path):
        raise DataFormatError(f"{path}: no such file")
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if len(lines) < 3:
        raise DataFormatError(f"{path}: need a schema line, header, and at least one row")
    header = _parse_schema_line(lines[0], path)
    if header.get("schema") != PATH_SCHEMA:
        raise DataFormatError(f"{path}: wrong header version {header.get('schema')!r}")
    rate = float(header["rate_hz"])
    if lines[1].split(",") != ["t", "x", "y", "yaw"]:
        raise DataFormatError(f"{path}: unexpected columns {lines[1]!r}")
    try:
        rows = np.array([[float(p) for p in ln.split(",")] for ln in lines[2:]])
    except ValueError:
        raise DataFormatError(f"{path}: non-numeric field") from None
    if rows.shape[1] != 4 or not np.all(np.isfinite(rows)):
        raise DataFormatError(f"{path}: malformed rows")
    return rows[:, 1:4], rate


def load_poses(path: str):
    """Poses from either a trajectory CSV (ground truth) or a path CSV."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    schema = _parse_schema_line(first, path).get("schema")
    if schema == TRAJ_SCHEMA:
        traj = load_trajectory(path)
        return traj.gt_poses(), traj.rate_hz
    if schema == PATH_SCHEMA:
        return load_path_csv(path)
    raise DataFormatError(f"{path}: unknown schema {schema!r}")


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Serialize a checkpoint; parameters are stored as float32."""
    p = ckpt.params
    header = [
        CKPT_MAGIC,
        "layer_sizes=" + ",".join(str(s) for s in p.layer_sizes),
        f"use_accel={int(ckpt.layout.use_accel)}",
        f"use_dp_hist={int(ckpt.layout.use_dp_hist)}",
        f"use_actions={int(ckpt.layout.use_actions)}",
        f"history_len={ckpt.layout.history_len}",
        f"horizon={ckpt.layout.horizon}",
        f"norm_len={p.layer_sizes[0]}",
        f"config_digest={ckpt.config_digest}",
        "",
    ]
    blobs = []
    for w, b in zip(p.weights, p.biases):
        blobs.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        blobs.append(np.asarray(b, dtype="<f4").tobytes())
    blobs.append(np.asarray(p.norm_mean, dtype="<f4").tobytes())
    blobs.append(np.asarray(p.norm_std, dtype="<f4").tobytes())
    atomic_write(path, "\n".join(header).encode() + b"".join(blobs))


def load_checkpoint(path: str, dtype=np.float64,
                    expect_layout: Optional[SensorLayout] = None) -> Checkpoint:
    """Read a checkpoint file back into memory.

    ``expect_layout`` asserts the stored layout (use it when a pipeline
    stage requires a specific sensor configuration).
    """
    if not os.path.exists(path):
        raise DataFormatError(f"{path}: no such file")
    with open(path, "rb") as fh:
        data = fh.read()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise DataFormatError(f"{path}: header terminator not found")
    header_lines = data[:sep].decode("utf-8", errors="replace").split("\n")
    blob = data[sep + 2 :]
    if header_lines[0] != CKPT_MAGIC:
        raise DataFormatError(f"{path}: bad magic {header_lines[0]!r}, expected {CKPT_MAGIC!r}")
    kv = {}
    for line in header_lines[1:]:
        if "=" not in line:
            raise DataFormatError(f"{path}: malformed header line {line!r}")
        key, val = line.split("=", 1)
        kv[key] = val
    try:
        sizes = tuple(int(s) for s in kv["layer_sizes"].split(","))
        layout = SensorLayout(
            use_accel=bool(int(kv["use_accel"])),
            use_dp_hist=bool(int(kv["use_dp_hist"])),
            use_actions=bool(int(kv["use_actions"])),
            history_len=int(kv["history_len"]),
            horizon=int(kv["horizon"]),
        )
        norm_len = int(kv["norm_len"])
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{path}: incomplete header ({exc})") from None

    expected_floats = sum(
        sizes[i + 1] * sizes[i] + sizes[i + 1] for i in range(len(sizes) - 1)
    ) + 2 * norm_len
    if len(blob) != 4 * expected_floats:
        raise DataFormatError(
            f"{path}: blob size mismatch: {len(blob)} bytes, expected {4 * expected_floats}"
        )
    flat = np.frombuffer(blob, dtype="<f4").astype(dtype)
    pos = 0

    def take(count, shape):
        nonlocal pos
        out = flat[pos : pos + count].reshape(shape)
        pos += count
        return out

    weights, biases = [], []
    for i in range(len(sizes) - 1):
        weights.append(take(sizes[i + 1] * sizes[i], (sizes[i + 1], sizes[i])))
        biases.append(take(sizes[i + 1], (sizes[i + 1],)))
    mean = take(norm_len, (norm_len,))
    std = take(norm_len, (norm_len,))
    params = MlpParams(sizes, tuple(weights), tuple(biases), mean, np.maximum(std, 1e-6))
    ckpt = Checkpoint(params, layout, kv.get("config_digest", ""))
    if expect_layout is not None and layout != expect_layout:
        raise DataFormatError(f"{path}: checkpoint layout {layout} does not match expected {expect_layout}")
    return ckpt


def parse_config_file(path: str) -> dict:
    """Flat ``key = value`` text; '#' starts a comment."""
    if not os.path.exists(path):
        raise DataFormatError(f"{path}: no such file")
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataFormatError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            if not key:
                raise DataFormatError(f"{path}:{lineno}: empty key")
            out[key] = val
    return out


def render_svg(gt_xy: np.ndarray, pred_xy: np.ndarray, width: int = 720, height: int = 540) -> str:
    """Overlay figure: ground truth in blue, prediction in orange."""
    gt_xy = np.asarray(gt_xy, dtype=float)
    pred_xy = np.asarray(pred_xy, dtype=float)
    both = np.vstack([gt_xy, pred_xy])
    lo = both.min(axis=0)
    hi = both.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.05 * float(span.max())
    lo, hi = lo - pad, hi + pad
    scale = min((width - 20) / (hi[0] - lo[0]), (height - 20) / (hi[1] - lo[1]))

    def pts(xy):
        px = 10 + (xy[:, 0] - lo[0]) * scale
        py = height - 10 - (xy[:, 1] - lo[1]) * scale
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))

    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<polyline points="{pts(gt_xy)}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>',
            f'<polyline points="{pts(pred_xy)}" fill="none" stroke="#ff7f0e" stroke-width="1.5"/>',
            '<text x="14" y="20" fill="#1f77b4" font-size="13">ground truth</text>',
            '<text x="14" y="38" fill="#ff7f0e" font-size="13">prediction</text>',
            "</svg>",
        ]
    )

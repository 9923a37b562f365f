"""Shared trajectory and observation data model.

A trajectory is a dense ``(T, 6)`` float array with channel order
``[px, py, cos_h, sin_h, vx, vy]``: positions in metres, heading stored as a
unit (cos, sin) pair, velocities in m/s.  Every other module (decomposition,
losses, simulator, training) speaks this layout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHANNELS = ("px", "py", "cos_h", "sin_h", "vx", "vy")
HEADING_TOL = 1e-6

# Scientific notation with 16 decimal places: always >= 9 significant digits
# and float64 values round-trip exactly.
FLOAT_FMT = ".16e"


def fmt_float(x) -> str:
    return format(float(x), FLOAT_FMT)


def write_csv(path, header, rows) -> None:
    """CSV writer with a fixed line terminator so outputs are byte-stable."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


@dataclass
class Trajectory:
    """Waypoint sequence, one row per timestep, channels per ``CHANNELS``."""

    data: np.ndarray
    dt: float = 0.1

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(CHANNELS):
            raise ValueError(f"trajectory data must be (T, 6), got {self.data.shape}")

    def __len__(self) -> int:
        return int(self.data.shape[0])

    @property
    def positions(self) -> np.ndarray:
        return self.data[:, 0:2]

    @property
    def headings(self) -> np.ndarray:
        return self.data[:, 2:4]

    @property
    def velocities(self) -> np.ndarray:
        return self.data[:, 4:6]


def validate_trajectory(traj: Trajectory) -> list[str]:
    """Return the list of violated invariants (empty means valid)."""
    errors = []
    n = len(traj)
    if n < 1:
        errors.append("empty trajectory")
    if not traj.dt > 0:
        errors.append(f"dt must be positive, got {traj.dt}")
    if n >= 1:
        if not np.isfinite(traj.data).all():
            errors.append("non-finite channel value")
        else:
            norm_err = np.abs(traj.data[:, 2] ** 2 + traj.data[:, 3] ** 2 - 1.0)
            bad = np.nonzero(norm_err > HEADING_TOL)[0]
            for t in bad:
                errors.append(f"heading not unit-norm at step {t}")
    return errors


def channel_matrix(traj: Trajectory) -> np.ndarray:
    """(T, 6) matrix view of a trajectory; row t holds waypoint t's channels."""
    errors = validate_trajectory(traj)
    if errors:
        raise ValueError("invalid trajectory: " + "; ".join(errors))
    return traj.data.copy()


def trajectory_from_matrix(matrix, dt: float = 0.1) -> Trajectory:
    return Trajectory(np.asarray(matrix, dtype=float).copy(), dt=dt)


def save_trajectory_csv(traj: Trajectory, path) -> None:
    rows = [[t] + [fmt_float(v) for v in row] for t, row in enumerate(traj.data)]
    write_csv(path, ("t",) + CHANNELS, rows)


def load_trajectory_csv(path, dt: float = 0.1) -> Trajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != ("t",) + CHANNELS:
            raise ValueError(f"unexpected trajectory CSV header: {header}")
        rows = [[float(v) for v in line[1:]] for line in reader if line]
    return Trajectory(np.array(rows, dtype=float), dt=dt)


# ---------------------------------------------------------------------------
# Frame transforms.  A pose is any 6-channel state row; only px, py, cos_h,
# sin_h are read.


def to_ego_frame(matrix, pose) -> np.ndarray:
    """Re-express world-frame state rows relative to ``pose``."""
    m = np.asarray(matrix, dtype=float)
    c, s = float(pose[2]), float(pose[3])
    out = m.copy()
    dx = m[..., 0] - float(pose[0])
    dy = m[..., 1] - float(pose[1])
    out[..., 0] = c * dx + s * dy
    out[..., 1] = -s * dx + c * dy
    hc, hs = m[..., 2], m[..., 3]
    out[..., 2] = hc * c + hs * s
    out[..., 3] = hs * c - hc * s
    vx, vy = m[..., 4], m[..., 5]
    out[..., 4] = c * vx + s * vy
    out[..., 5] = -s * vx + c * vy
    return out


def to_world_frame(matrix, pose) -> np.ndarray:
    """Inverse of :func:`to_ego_frame`."""
    m = np.asarray(matrix, dtype=float)
    c, s = float(pose[2]), float(pose[3])
    out = m.copy()
    x, y = m[..., 0], m[..., 1]
    out[..., 0] = float(pose[0]) + c * x - s * y
    out[..., 1] = float(pose[1]) + s * x + c * y
    hc, hs = m[..., 2], m[..., 3]
    out[..., 2] = hc * c - hs * s
    out[..., 3] = hs * c + hc * s
    vx, vy = m[..., 4], m[..., 5]
    out[..., 4] = c * vx - s * vy
    out[..., 5] = s * vx + c * vy
    return out


# ---------------------------------------------------------------------------


@dataclass
class Obstacle:
    """Static circular obstacle; hidden until ``first_visible_step``."""

    center: np.ndarray
    radius: float
    first_visible_step: int

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)


@dataclass
class Observation:
    """What the planner is allowed to see at one step.

    ``ego_history`` holds exactly H world-frame state rows, oldest first and
    ending at the current state.  ``visible_obstacles`` contains only
    obstacles whose ``first_visible_step`` is at or before ``current_step``.
    """

    ego_history: np.ndarray
    visible_obstacles: list[Obstacle]
    signal_state: str  # "green" | "red"
    signal_position: float | None
    lane: np.ndarray  # (S, 2) reference polyline
    current_step: int

    @property
    def current_state(self) -> np.ndarray:
        return self.ego_history[-1]


@dataclass
class PlanConfig:
    """Planner dimensions shared across modules."""

    future_steps: int = 80
    history_steps: int = 21
    mode_count: int = 3
    wavelet_levels: int = 3
    ds_horizon: int = 10
    dt: float = 0.1

    def validate(self) -> list[str]:
        errors = []
        if self.future_steps < 1:
            errors.append("future_steps must be >= 1")
        if self.history_steps < 1:
            errors.append("history_steps must be >= 1")
        if self.mode_count < 1:
            errors.append("mode_count must be >= 1")
        if self.wavelet_levels < 0:
            errors.append("wavelet_levels must be >= 0")
        elif self.future_steps % (2 ** self.wavelet_levels) != 0:
            errors.append(
                f"future_steps ({self.future_steps}) must be divisible by "
                f"2^wavelet_levels ({2 ** self.wavelet_levels})"
            )
        if not (1 <= self.ds_horizon <= self.future_steps):
            errors.append("ds_horizon must be in [1, future_steps]")
        if not self.dt > 0:
            errors.append("dt must be positive")
        return errors

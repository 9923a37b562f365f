"""Closed-loop episode scoring and multi-run comparison reports.

The composite score is gated multiplicatively by the hard outcomes (any
collision or leaving the drivable corridor zeroes the episode) and otherwise
mixes progress, comfort and speed compliance 0.5/0.25/0.25.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import fmt_float, write_csv
from .simulator import EpisodeLog, Scenario

ACCEL_CAP = 2.0  # m/s^2
JERK_CAP = 4.0  # m/s^3
SPEED_RATIO_CAP = 1.05
RED_CROSS_SPEED = 0.5  # m/s allowed past a stop line crossed on red


@dataclass
class DrivingScore:
    no_collision: float
    drivable: float
    progress: float
    comfort: float
    speed_compliance: float
    composite: float
    diagnostic: str = ""


def _composite(no_collision, drivable, progress, comfort, speed) -> float:
    return no_collision * drivable * (0.5 * progress + 0.25 * comfort + 0.25 * speed)


def _red_phase_ids(scenario: Scenario, n: int) -> np.ndarray:
    """Per-step id of the active red phase (-1 when green)."""
    ids = np.full(n, -1, dtype=int)
    phase = -1
    current = -1
    state = "green"
    switches = scenario.signal_switches()
    for t in range(n):
        for ev in switches:
            if ev.trigger_step == t:
                if ev.switch_to == "red" and state != "red":
                    phase += 1
                    current = phase
                state = ev.switch_to
        ids[t] = current if state == "red" else -1
    return ids


def score_episode(log: EpisodeLog, scenario: Scenario,
                  expert_log: EpisodeLog) -> DrivingScore:
    """Composite closed-loop driving score of one episode.

    Progress is measured against the expert's longitudinal distance on the
    same scenario.  Truncated (aborted) logs fail both gates.
    """
    if log.aborted or log.states.shape[0] < 2:
        return DrivingScore(0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                            diagnostic="aborted:" + log.abort_reason)
    states = log.states
    n = states.shape[0]
    dt = log.dt
    steps = np.arange(n)

    collided = False
    for e in scenario.obstacles():
        active = steps >= e.trigger_step
        if not active.any():
            continue
        d = np.linalg.norm(states[active, 0:2] - np.array([e.x, e.y]), axis=1)
        if (d <= e.radius).any():
            collided = True
            break
    no_collision = 0.0 if collided else 1.0

    drivable = 1.0 if np.abs(states[:, 1]).max() <= scenario.half_width else 0.0

    expert_dist = expert_log.states[-1, 0] - expert_log.states[0, 0]
    ego_dist = states[-1, 0] - states[0, 0]
    progress = float(np.clip(ego_dist / expert_dist, 0.0, 1.0)) if expert_dist > 0 else 1.0

    vel = states[:, 4:6]
    if n >= 3:
        acc = np.diff(vel, axis=0) / dt
        jerk = np.diff(acc, axis=0) / dt
        acc_mag = np.linalg.norm(acc, axis=1)
        jerk_mag = np.linalg.norm(jerk, axis=1)
        k = jerk_mag.shape[0]
        ok = (acc_mag[:k] <= ACCEL_CAP) & (jerk_mag <= JERK_CAP)
        comfort = float(ok.mean())
    else:
        comfort = 1.0

    speed = np.linalg.norm(vel, axis=1)
    speed_ok = speed <= SPEED_RATIO_CAP * scenario.v_ref + 1e-9
    if scenario.signal_position is not None:
        x_s = scenario.signal_position
        phase_ids = _red_phase_ids(scenario, n)
        past = states[:, 0] > x_s
        crossing = np.nonzero(past)[0]
        if crossing.size and (crossing[0] == 0 or not past[crossing[0] - 1]):
            c = int(crossing[0])
            if phase_ids[c] >= 0:
                # Crossed the stop line on red: moving while that phase lasts
                # and the ego is past the line is a violation.
                bad = past & (phase_ids == phase_ids[c]) & (speed > RED_CROSS_SPEED)
                bad[:c] = False
                speed_ok = speed_ok & ~bad
    speed_compliance = float(speed_ok.mean())

    return DrivingScore(
        no_collision=no_collision,
        drivable=drivable,
        progress=progress,
        comfort=comfort,
        speed_compliance=speed_compliance,
        composite=_composite(no_collision, drivable, progress, comfort,
                             speed_compliance),
    )


# ---------------------------------------------------------------------------
# Reports

REPORT_COLUMNS = (
    "config",
    "mean_composite",
    "std_composite",
    "no_collision_rate",
    "drivable_rate",
    "mean_progress",
    "mean_comfort",
    "mean_speed",
)


def summarize(name: str, scores) -> dict:
    vals = list(scores.values()) if isinstance(scores, dict) else list(scores)
    comp = np.array([s.composite for s in vals])
    return {
        "config": name,
        "mean_composite": float(comp.mean()),
        "std_composite": float(comp.std()),
        "no_collision_rate": float(np.mean([s.no_collision for s in vals])),
        "drivable_rate": float(np.mean([s.drivable for s in vals])),
        "mean_progress": float(np.mean([s.progress for s in vals])),
        "mean_comfort": float(np.mean([s.comfort for s in vals])),
        "mean_speed": float(np.mean([s.speed_compliance for s in vals])),
    }


def compare_runs(results: list[tuple[str, dict]]) -> list[dict]:
    """Per-config summary rows over a shared scenario set, best composite first.

    ``results`` pairs a config name with {scenario_key: DrivingScore}.  All
    configs must cover exactly the same scenario keys.
    """
    if not results:
        raise ValueError("no runs to compare")
    ref_keys = set(results[0][1].keys())
    for name, scores in results[1:]:
        if set(scores.keys()) != ref_keys:
            raise ValueError(f"run {name!r} covers a different scenario set")
    rows = [summarize(name, scores) for name, scores in results]
    rows.sort(key=lambda r: -r["mean_composite"])
    return rows


def write_report_csv(rows: list[dict], path) -> None:
    out = [[r["config"]] + [fmt_float(r[c]) for c in REPORT_COLUMNS[1:]] for r in rows]
    write_csv(path, REPORT_COLUMNS, out)


SCORE_COLUMNS = ("root_seed", "index", "no_collision", "drivable", "progress",
                 "comfort", "speed_compliance", "composite")


def write_scores_csv(scores: dict, path) -> None:
    rows = []
    for key in sorted(scores):
        s = scores[key]
        rows.append([key[0], key[1]] + [
            fmt_float(v) for v in (s.no_collision, s.drivable, s.progress,
                                   s.comfort, s.speed_compliance, s.composite)
        ])
    write_csv(path, SCORE_COLUMNS, rows)


def load_scores_csv(path) -> dict:
    scores = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SCORE_COLUMNS:
            raise ValueError(f"unexpected scores CSV header: {header}")
        for line in reader:
            if not line:
                continue
            key = (int(line[0]), int(line[1]))
            vals = [float(v) for v in line[2:]]
            scores[key] = DrivingScore(*vals)
    return scores

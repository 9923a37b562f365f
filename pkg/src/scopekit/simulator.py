"""Desk-scale closed-loop driving world with scripted unpredictable events.

The world is a straight lane along +x.  A scenario scripts events that are
hidden from observations until their trigger step: pop-up obstacles and
traffic-signal switches.  The expert demonstrator, by contrast, knows the
whole script and reacts ahead of time, so the logged futures contain motion
that is not predictable from any observation.

Expert motion is built from comfort-bounded closed-form profiles: a
jerk-limited longitudinal speed plan (braking to stop lines, resuming on
green) and quintic lateral avoidance bumps keyed on longitudinal position,
so that a braked ego never sweeps sideways while stationary.

Plan execution uses a feasibility-clamped waypoint tracker rather than a
tuned feedback controller: per-step acceleration is capped at ``a_max`` and
lateral speed at ``lat_rate_max``.  Feasible plans are followed exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .core import (
    Obstacle,
    Observation,
    Trajectory,
    fmt_float,
    to_ego_frame,
    to_world_frame,
    write_csv,
)

A_MAX = 4.0  # m/s^2, tracker acceleration clamp
LAT_RATE_MAX = 3.0  # m/s, tracker lateral speed clamp
CLAMP_TOL = 1e-9


class ConfigError(ValueError):
    """Raised for infeasible scenario configurations."""


@dataclass
class Event:
    kind: str  # "popup_obstacle" | "signal_switch"
    trigger_step: int
    x: float = 0.0
    y: float = 0.0
    radius: float = 0.0
    switch_to: str = ""


@dataclass
class Scenario:
    root_seed: int
    index: int
    episode_steps: int = 300
    dt: float = 0.1
    v_ref: float = 8.0
    half_width: float = 2.5
    lane_length: float = 400.0
    signal_position: float | None = None
    margin: float = 0.5
    # The ego spawns slightly off the lane center; the expert merges back.
    # Recovery states must appear in the demonstrations or a cloned policy
    # never learns the corrective gain that keeps the closed loop on the lane.
    spawn_lateral: float = 0.0
    events: list[Event] = field(default_factory=list)

    @property
    def key(self) -> tuple[int, int]:
        return (self.root_seed, self.index)

    def obstacles(self) -> list[Event]:
        return [e for e in self.events if e.kind == "popup_obstacle"]

    def signal_switches(self) -> list[Event]:
        return sorted(
            (e for e in self.events if e.kind == "signal_switch"),
            key=lambda e: e.trigger_step,
        )

    def signal_state_at(self, step: int) -> str:
        state = "green"
        for ev in self.signal_switches():
            if ev.trigger_step <= step:
                state = ev.switch_to
        return state

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d)
        d["events"] = [Event(**e) for e in d.get("events", [])]
        return cls(**d)


@dataclass
class ExpertParams:
    """Comfort envelope of the demonstrator.

    The avoidance peak clears each obstacle by exactly ``scenario.margin``;
    the bump holds its peak from ``lead_time`` seconds (at cruise speed)
    before closest approach until the same interval after, with quintic
    transitions of ``transition_time`` seconds on each side.
    """

    lead_time: float = 1.5
    transition_time: float = 4.0
    merge_time: float = 3.0
    brake_decel: float = 1.2
    brake_jerk: float = 2.0
    accel: float = 1.2
    accel_jerk: float = 2.0
    stop_offset: float = 0.7


@dataclass
class ScenarioConfig:
    episode_steps: int = 300
    dt: float = 0.1
    v_ref: float = 8.0
    half_width: float = 2.5
    lane_length: float = 400.0
    margin: float = 0.5
    obstacle_count_probs: tuple = (0.3, 0.45, 0.25)
    obstacle_x_range: tuple = (60.0, 200.0)
    obstacle_radius_range: tuple = (0.4, 0.8)
    obstacle_lateral_range: tuple = (-0.3, 0.3)
    obstacle_visible_lead_range: tuple = (1.0, 2.5)
    obstacle_min_spacing: float = 30.0
    signal_probability: float = 0.5
    signal_x_range: tuple = (60.0, 200.0)
    signal_red_lead_range: tuple = (1.0, 3.0)
    signal_red_duration_range: tuple = (3.0, 6.0)
    min_event_separation_s: float = 3.0
    spawn_lateral_range: tuple = (-0.6, 0.6)
    expert: ExpertParams = field(default_factory=ExpertParams)

    def validate(self) -> None:
        r_max = self.obstacle_radius_range[1]
        y_max = max(abs(self.obstacle_lateral_range[0]),
                    abs(self.obstacle_lateral_range[1]))
        if r_max > self.half_width:
            raise ConfigError(
                f"obstacle radius {r_max} exceeds lane half-width {self.half_width}"
            )
        if y_max + r_max + self.margin > self.half_width - 0.3:
            raise ConfigError(
                "avoidance peak would leave the drivable corridor: "
                f"lateral {y_max} + radius {r_max} + margin {self.margin} "
                f"too close to half-width {self.half_width}"
            )
        probs = np.asarray(self.obstacle_count_probs, dtype=float)
        if probs.min() < 0 or abs(probs.sum() - 1.0) > 1e-9:
            raise ConfigError("obstacle_count_probs must be a probability vector")
        if not (0.0 <= self.signal_probability <= 1.0):
            raise ConfigError("signal_probability must be in [0, 1]")
        if self.episode_steps * self.dt * self.v_ref > self.lane_length:
            raise ConfigError("lane too short for the episode at cruise speed")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "expert" in d:
            d["expert"] = ExpertParams(**d["expert"])
        for key, value in list(d.items()):
            if isinstance(value, list):
                d[key] = tuple(value)
        return cls(**d)


def sample_scenario(root_seed: int, index: int, config: ScenarioConfig) -> Scenario:
    """Deterministic scenario draw for (root_seed, index)."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(root_seed), int(index)]))
    dt, v_ref = config.dt, config.v_ref
    sep_steps = int(round(config.min_event_separation_s / dt))
    spawn_lateral = float(rng.uniform(*config.spawn_lateral_range))

    for _ in range(200):
        events: list[Event] = []
        n_obs = int(rng.choice(len(config.obstacle_count_probs),
                               p=np.asarray(config.obstacle_count_probs, dtype=float)))
        xs = np.sort(rng.uniform(*config.obstacle_x_range, size=n_obs))
        if n_obs > 1 and np.diff(xs).min() < config.obstacle_min_spacing:
            continue
        ok = True
        for x in xs:
            radius = float(rng.uniform(*config.obstacle_radius_range))
            lateral = float(rng.uniform(*config.obstacle_lateral_range))
            lead = float(rng.uniform(*config.obstacle_visible_lead_range))
            trigger = int(round((x / v_ref - lead) / dt))
            if not (0 <= trigger < config.episode_steps):
                ok = False
                break
            events.append(Event("popup_obstacle", trigger, x=float(x),
                                y=lateral, radius=radius))
        if not ok:
            continue

        signal_position = None
        if rng.uniform() < config.signal_probability:
            x_s = float(rng.uniform(*config.signal_x_range))
            if any(abs(x_s - e.x) < 15.0 for e in events):
                continue
            arrival = x_s / v_ref
            red_on = max(arrival - float(rng.uniform(*config.signal_red_lead_range)), 0.5)
            red_off = red_on + float(rng.uniform(*config.signal_red_duration_range))
            on_step = int(round(red_on / dt))
            off_step = int(round(red_off / dt))
            if not (0 <= on_step < config.episode_steps) or off_step <= on_step:
                continue
            signal_position = x_s
            events.append(Event("signal_switch", on_step, switch_to="red"))
            if off_step < config.episode_steps:
                events.append(Event("signal_switch", off_step, switch_to="green"))

        triggers = sorted(e.trigger_step for e in events)
        if any(b - a < sep_steps for a, b in zip(triggers, triggers[1:])):
            continue

        return Scenario(
            root_seed=int(root_seed),
            index=int(index),
            episode_steps=config.episode_steps,
            dt=dt,
            v_ref=v_ref,
            half_width=config.half_width,
            lane_length=config.lane_length,
            signal_position=signal_position,
            margin=config.margin,
            spawn_lateral=spawn_lateral,
            events=sorted(events, key=lambda e: (e.trigger_step, e.kind)),
        )
    # A clean draw should be found long before this; fall back to no events.
    return Scenario(root_seed=int(root_seed), index=int(index),
                    episode_steps=config.episode_steps, dt=dt, v_ref=v_ref,
                    half_width=config.half_width, lane_length=config.lane_length,
                    margin=config.margin, spawn_lateral=spawn_lateral, events=[])


# ---------------------------------------------------------------------------
# Expert profiles


def _quintic(u):
    """Minimum-jerk smoothstep on [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


def _ramp_duration(delta_v: float, a_max: float, jerk: float) -> float:
    if delta_v <= 0:
        return 0.0
    if delta_v >= a_max * a_max / jerk:
        return 2.0 * a_max / jerk + (delta_v - a_max * a_max / jerk) / a_max
    return 2.0 * math.sqrt(delta_v / jerk)


def _ramp_speed(v0: float, v1: float, a_max: float, jerk: float, tau: float) -> float:
    """Speed ``tau`` seconds into a jerk-limited transition from v0 to v1."""
    delta = abs(v1 - v0)
    if delta == 0.0:
        return v0
    sign = 1.0 if v1 > v0 else -1.0
    if delta >= a_max * a_max / jerk:
        t1 = a_max / jerk
        tc = (delta - a_max * a_max / jerk) / a_max
    else:
        t1 = math.sqrt(delta / jerk)
        tc = 0.0
        a_max = jerk * t1
    total = 2.0 * t1 + tc
    tau = min(max(tau, 0.0), total)
    if tau <= t1:
        dv = 0.5 * jerk * tau * tau
    elif tau <= t1 + tc:
        dv = 0.5 * jerk * t1 * t1 + a_max * (tau - t1)
    else:
        rem = total - tau
        dv = delta - 0.5 * jerk * rem * rem
    return v0 + sign * dv


@dataclass
class _StopPlan:
    brake_start: float
    brake_duration: float
    resume: float
    accel_duration: float


def _stop_plan(scenario: Scenario, params: ExpertParams) -> _StopPlan | None:
    if scenario.signal_position is None:
        return None
    switches = scenario.signal_switches()
    red_on = next((e.trigger_step for e in switches if e.switch_to == "red"), None)
    if red_on is None:
        return None
    red_off = next(
        (e.trigger_step for e in switches
         if e.switch_to == "green" and e.trigger_step > red_on),
        scenario.episode_steps * 4,
    )
    dt, v_ref = scenario.dt, scenario.v_ref
    x_stop = scenario.signal_position - params.stop_offset
    arrival = x_stop / v_ref
    if not (red_on * dt <= arrival < red_off * dt):
        return None
    brake_t = _ramp_duration(v_ref, params.brake_decel, params.brake_jerk)
    brake_dist = 0.5 * v_ref * brake_t
    brake_start = max((x_stop - brake_dist) / v_ref, 0.0)
    resume = max(red_off * dt, brake_start + brake_t)
    accel_t = _ramp_duration(v_ref, params.accel, params.accel_jerk)
    return _StopPlan(brake_start, brake_t, resume, accel_t)


def _speed_at(t: float, v_ref: float, plan: _StopPlan | None,
              params: ExpertParams) -> float:
    if plan is None or t < plan.brake_start:
        return v_ref
    if t < plan.brake_start + plan.brake_duration:
        return _ramp_speed(v_ref, 0.0, params.brake_decel, params.brake_jerk,
                           t - plan.brake_start)
    if t < plan.resume:
        return 0.0
    return _ramp_speed(0.0, v_ref, params.accel, params.accel_jerk, t - plan.resume)


@dataclass
class _AvoidGroup:
    plateau_start: float
    plateau_end: float
    transition: float
    peak: float


def _avoid_groups(scenario: Scenario, params: ExpertParams) -> list[_AvoidGroup]:
    obstacles = sorted(scenario.obstacles(), key=lambda e: e.x)
    if not obstacles:
        return []
    hold = params.lead_time * scenario.v_ref
    trans = params.transition_time * scenario.v_ref
    groups: list[_AvoidGroup] = []
    members: list[list[Event]] = []
    for obs in obstacles:
        lo, hi = obs.x - hold, obs.x + hold
        if groups and lo - trans <= groups[-1].plateau_end + trans:
            groups[-1].plateau_start = min(groups[-1].plateau_start, lo)
            groups[-1].plateau_end = max(groups[-1].plateau_end, hi)
            members[-1].append(obs)
        else:
            groups.append(_AvoidGroup(lo, hi, trans, 0.0))
            members.append([obs])
    for g, obs_list in zip(groups, members):
        # Dodge away from the side the (first) obstacle leans toward, with
        # clearance radius + margin past every member of the group.
        side = -1.0 if obs_list[0].y > 0 else 1.0
        if side > 0:
            g.peak = max(o.y + o.radius + scenario.margin for o in obs_list)
        else:
            g.peak = min(o.y - o.radius - scenario.margin for o in obs_list)
    return groups


def _lateral_offset(x, groups: list[_AvoidGroup], scenario: Scenario,
                    params: ExpertParams):
    """Lateral reference offset at longitudinal position x (vectorized):
    spawn-offset merge back to the center line plus avoidance bumps."""
    x = np.asarray(x, dtype=float)
    merge_dist = params.merge_time * scenario.v_ref
    y = scenario.spawn_lateral * (1.0 - _quintic(x / merge_dist))
    for g in groups:
        rise = _quintic((x - (g.plateau_start - g.transition)) / g.transition)
        fall = 1.0 - _quintic((x - g.plateau_end) / g.transition)
        y = y + g.peak * np.minimum(rise, fall)
    return y


def expert_profile(scenario: Scenario, params: ExpertParams, n_steps: int) -> np.ndarray:
    """(n_steps, 6) state rows of the fully informed demonstrator."""
    dt = scenario.dt
    plan = _stop_plan(scenario, params)
    groups = _avoid_groups(scenario, params)
    speeds = np.array([
        _speed_at(k * dt, scenario.v_ref, plan, params) for k in range(n_steps)
    ])
    px = np.empty(n_steps)
    px[0] = 0.0
    for k in range(1, n_steps):
        px[k] = px[k - 1] + speeds[k] * dt
    py = _lateral_offset(px, groups, scenario, params)
    vy = np.empty(n_steps)
    vy[0] = 0.0
    vy[1:] = np.diff(py) / dt
    states = np.zeros((n_steps, 6))
    states[:, 0] = px
    states[:, 1] = py
    states[:, 4] = speeds
    states[:, 5] = vy
    heading = np.array([1.0, 0.0])
    for k in range(n_steps):
        v = states[k, 4:6]
        speed = math.hypot(v[0], v[1])
        if speed > 1e-9:
            heading = v / speed
        states[k, 2:4] = heading
    return states


# ---------------------------------------------------------------------------
# Episode logs and observation


@dataclass
class EpisodeLog:
    states: np.ndarray  # (episode_steps, 6)
    dt: float
    kind: str  # "expert" | "closed-loop"
    scenario: Scenario
    plans: dict[int, np.ndarray] = field(default_factory=dict)
    aborted: bool = False
    abort_reason: str = ""
    max_tracking_deviation: float = 0.0

    def __len__(self) -> int:
        return int(self.states.shape[0])


def lane_polyline(scenario: Scenario, spacing: float = 5.0) -> np.ndarray:
    n = max(int(math.ceil(scenario.lane_length / spacing)) + 1, 2)
    xs = np.linspace(0.0, scenario.lane_length, n)
    return np.column_stack([xs, np.zeros_like(xs)])


def prehistory(scenario: Scenario, n: int) -> np.ndarray:
    """States for steps -n..-1: straight cruise into the spawn point."""
    k = np.arange(-n, 0, dtype=float)
    states = np.zeros((n, 6))
    states[:, 0] = k * scenario.v_ref * scenario.dt
    states[:, 1] = scenario.spawn_lateral
    states[:, 2] = 1.0
    states[:, 4] = scenario.v_ref
    return states


def spawn_state(scenario: Scenario) -> np.ndarray:
    return np.array([0.0, scenario.spawn_lateral, 1.0, 0.0, scenario.v_ref, 0.0])


def lane_frame_pose(state) -> np.ndarray:
    """Pose at the ego position but heading-aligned with the lane.

    Plans are exchanged in this frame rather than the raw ego frame: anchoring
    the plan frame to the reference line keeps small heading errors from
    rotating the next plan and compounding across replans.
    """
    return np.array([state[0], state[1], 1.0, 0.0, 0.0, 0.0])


def observe(scenario: Scenario, states_so_far: np.ndarray, step: int,
            history_steps: int) -> Observation:
    """Observation at ``step``: only events already triggered are visible."""
    if step >= states_so_far.shape[0]:
        raise ValueError(f"step {step} beyond available states")
    need = history_steps - (step + 1)
    if need > 0:
        hist = np.vstack([prehistory(scenario, need), states_so_far[: step + 1]])
    else:
        hist = states_so_far[step + 1 - history_steps : step + 1].copy()
    visible = [
        Obstacle(np.array([e.x, e.y]), e.radius, e.trigger_step)
        for e in scenario.obstacles()
        if e.trigger_step <= step
    ]
    return Observation(
        ego_history=hist,
        visible_obstacles=visible,
        signal_state=scenario.signal_state_at(step),
        signal_position=scenario.signal_position,
        lane=lane_polyline(scenario),
        current_step=step,
    )


def expert_rollout(scenario: Scenario,
                   params: ExpertParams | None = None) -> EpisodeLog:
    params = params or ExpertParams()
    states = expert_profile(scenario, params, scenario.episode_steps)
    return EpisodeLog(states=states, dt=scenario.dt, kind="expert",
                      scenario=scenario)


# ---------------------------------------------------------------------------
# Plan execution and closed loop


def execute_plan(state, plan: np.ndarray, n_steps: int, dt: float,
                 a_max: float = A_MAX, lat_rate_max: float = LAT_RATE_MAX):
    """Track the first ``n_steps`` waypoints of a world-frame plan.

    Returns (states, max_deviation).  Acceleration is clamped to ``a_max``
    (vector norm) and lateral speed to ``lat_rate_max``; within those limits
    waypoints are hit exactly.
    """
    plan = np.asarray(plan, dtype=float)
    if plan.shape[0] < n_steps:
        raise ValueError(f"plan has {plan.shape[0]} steps, need {n_steps}")
    cur = np.asarray(state, dtype=float).copy()
    out = np.zeros((n_steps, 6))
    max_dev = 0.0
    for k in range(n_steps):
        wp = plan[k]
        v_des = (wp[0:2] - cur[0:2]) / dt
        dv = v_des - cur[4:6]
        dv_norm = math.hypot(dv[0], dv[1])
        if dv_norm > a_max * dt:
            dv = dv * (a_max * dt / dv_norm)
        v_new = cur[4:6] + dv
        v_new[1] = min(max(v_new[1], -lat_rate_max), lat_rate_max)
        pos_new = cur[0:2] + v_new * dt
        speed = math.hypot(v_new[0], v_new[1])
        heading = v_new / speed if speed > 1e-9 else cur[2:4]
        cur = np.concatenate([pos_new, heading, v_new])
        out[k] = cur
        max_dev = max(max_dev, float(np.linalg.norm(pos_new - wp[0:2])))
    return out, max_dev


def closed_loop_rollout(planner, scenario: Scenario, replan_interval: int,
                        history_steps: int = 21) -> EpisodeLog:
    """observe -> plan -> execute loop; deterministic given (planner, scenario)."""
    if replan_interval < 1:
        raise ValueError("replan_interval must be >= 1")
    n = scenario.episode_steps
    states = np.zeros((n, 6))
    states[0] = spawn_state(scenario)
    log = EpisodeLog(states=states, dt=scenario.dt, kind="closed-loop",
                     scenario=scenario)
    t = 0
    while t < n - 1:
        obs = observe(scenario, states[: t + 1], t, history_steps)
        plan_traj = planner.plan(obs)
        plan_data = plan_traj.data if isinstance(plan_traj, Trajectory) else np.asarray(plan_traj)
        if not np.isfinite(plan_data).all():
            log.aborted = True
            log.abort_reason = f"non-finite plan at step {t}"
            log.states = states[: t + 1].copy()
            return log
        n_exec = min(replan_interval, n - 1 - t)
        if plan_data.shape[0] < n_exec:
            raise ValueError(
                f"plan with {plan_data.shape[0]} steps cannot cover "
                f"replan interval {n_exec}"
            )
        world_plan = to_world_frame(plan_data, lane_frame_pose(states[t]))
        log.plans[t] = world_plan
        executed, dev = execute_plan(states[t], world_plan, n_exec, scenario.dt)
        states[t + 1 : t + 1 + n_exec] = executed
        log.max_tracking_deviation = max(log.max_tracking_deviation, dev)
        t += n_exec
    return log


class ExpertPlanner:
    """Expert oracle behind the planner interface: serves slices of the
    precomputed full-knowledge profile, re-expressed in the ego frame."""

    def __init__(self, scenario: Scenario, future_steps: int,
                 params: ExpertParams | None = None):
        self.future_steps = future_steps
        self.dt = scenario.dt
        self._profile = expert_profile(
            scenario, params or ExpertParams(),
            scenario.episode_steps + future_steps + 1,
        )

    def plan(self, obs: Observation) -> Trajectory:
        t = obs.current_step
        future = self._profile[t + 1 : t + 1 + self.future_steps]
        pose = lane_frame_pose(obs.current_state)
        return Trajectory(to_ego_frame(future, pose), dt=self.dt)


# ---------------------------------------------------------------------------
# Episode persistence


def save_episode(log: EpisodeLog, out_dir, history_steps: int = 21) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = [[t] + [fmt_float(v) for v in row] for t, row in enumerate(log.states)]
    write_csv(out_dir / "states.csv",
              ("t", "px", "py", "cos_h", "sin_h", "vx", "vy"), rows)

    obs_rows = []
    for t in range(log.states.shape[0]):
        obs = observe(log.scenario, log.states[: t + 1], t, history_steps)
        blob = json.dumps([
            [o.center[0], o.center[1], o.radius, o.first_visible_step]
            for o in obs.visible_obstacles
        ])
        obs_rows.append([t, obs.signal_state, len(obs.visible_obstacles), blob])
    write_csv(out_dir / "observations.csv",
              ("t", "signal_state", "n_visible", "obstacles"), obs_rows)

    events = {
        "script": [asdict(e) for e in log.scenario.events],
        "activations": [
            {"step": e.trigger_step, "kind": e.kind} for e in log.scenario.events
        ],
    }
    (out_dir / "events.json").write_text(
        json.dumps(events, indent=2, sort_keys=True) + "\n")
    (out_dir / "scenario.json").write_text(
        json.dumps(log.scenario.to_dict(), indent=2, sort_keys=True) + "\n")
    (out_dir / "episode.json").write_text(json.dumps({
        "kind": log.kind,
        "aborted": log.aborted,
        "abort_reason": log.abort_reason,
        "max_tracking_deviation": log.max_tracking_deviation,
    }, indent=2, sort_keys=True) + "\n")

    if log.plans:
        plans_dir = out_dir / "plans"
        plans_dir.mkdir(exist_ok=True)
        for step in sorted(log.plans):
            rows = [[t] + [fmt_float(v) for v in row]
                    for t, row in enumerate(log.plans[step])]
            write_csv(plans_dir / f"plan_{step:06d}.csv",
                      ("t", "px", "py", "cos_h", "sin_h", "vx", "vy"), rows)


def load_episode(ep_dir) -> EpisodeLog:
    ep_dir = Path(ep_dir)
    scenario = Scenario.from_dict(json.loads((ep_dir / "scenario.json").read_text()))
    meta = json.loads((ep_dir / "episode.json").read_text())
    import csv as _csv

    with open(ep_dir / "states.csv", newline="") as fh:
        reader = _csv.reader(fh)
        next(reader)
        states = np.array([[float(v) for v in line[1:]] for line in reader if line])
    return EpisodeLog(
        states=states,
        dt=scenario.dt,
        kind=meta["kind"],
        scenario=scenario,
        aborted=meta["aborted"],
        abort_reason=meta["abort_reason"],
        max_tracking_deviation=meta["max_tracking_deviation"],
    )

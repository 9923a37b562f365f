"""Differentiable planning policy with hand-rolled forward/backward passes.

The network is a two-layer tanh trunk feeding parallel linear heads:

* a multi-modal trajectory head (M x T x 6),
* a mode-score head (M,),
* optional detail heads that emit full-horizon position profiles which are
  strided down to match decomposition components.

Two detail-generation structures are supported: ``multihead`` reads every
detail head off the final trunk state; ``iterative`` threads the trunk state
through residual tanh refinement blocks and reads detail level l off the
l-th refined state (the approximation off the unrefined state, the executed
trajectory off the last).

Gradients are exact reverse-mode, verified in the tests against central
finite differences.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, asdict, field

import numpy as np

from .core import Observation, PlanConfig, Trajectory, to_ego_frame

# Longitudinal spans tens of metres while lateral structure lives within a
# couple of metres; scale them separately so neither drowns the other.
POS_SCALE = 0.1
LAT_SCALE = 1.0
VEL_SCALE = 0.1
LAT_VEL_SCALE = 1.0
CURV_SCALE = 10.0
CURV_LOOKAHEADS = (5.0, 15.0, 30.0)
SIGNAL_CLIP = (-5.0, 40.0)

CHECKPOINT_FORMAT = "scopekit-checkpoint"
CHECKPOINT_VERSION = 1

DETAIL_STRUCTURES = ("none", "multihead", "iterative")
DECOMPOSITIONS = ("none", "dwt", "dwh")


@dataclass
class PolicyConfig:
    feature_dim: int
    hidden_width: int = 64
    mode_count: int = 3
    future_steps: int = 80
    levels: int = 0
    detail_structure: str = "none"
    decomposition: str = "none"

    def validate(self) -> None:
        if self.detail_structure not in DETAIL_STRUCTURES:
            raise ValueError(f"unknown detail_structure {self.detail_structure!r}")
        if self.decomposition not in DECOMPOSITIONS:
            raise ValueError(f"unknown decomposition {self.decomposition!r}")
        if (self.detail_structure == "none") != (self.decomposition == "none"):
            raise ValueError("detail_structure and decomposition must be set together")
        if self.levels < 0:
            raise ValueError("levels must be >= 0")
        if self.has_detail_heads:
            stride = 2 ** self.levels
            if self.future_steps % stride != 0:
                raise ValueError(
                    f"future_steps {self.future_steps} not divisible by {stride}"
                )

    @property
    def has_detail_heads(self) -> bool:
        return self.detail_structure != "none" and self.levels > 0

    @property
    def has_approx_head(self) -> bool:
        # The strided-stack decomposition has no approximation component.
        return self.has_detail_heads and self.decomposition == "dwt"

    def detail_stride(self, level: int) -> int:
        """Downsampling stride applied to the full-horizon head at 1-based level."""
        if self.decomposition == "dwt":
            return 2 ** level
        if self.decomposition == "dwh":
            return 2 ** (level - 1)
        raise ValueError("no detail heads configured")


def param_spec(cfg: PolicyConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Fixed parameter ordering; also the flat checkpoint layout."""
    cfg.validate()
    d, w = cfg.feature_dim, cfg.hidden_width
    t6 = cfg.future_steps * 6
    spec = [
        ("trunk.w1", (w, d)),
        ("trunk.b1", (w,)),
        ("trunk.w2", (w, w)),
        ("trunk.b2", (w,)),
    ]
    if cfg.detail_structure == "iterative":
        for i in range(1, cfg.levels + 1):
            spec.append((f"refine{i}.w", (w, w)))
            spec.append((f"refine{i}.b", (w,)))
    spec.append(("head.traj.w", (cfg.mode_count * t6, w)))
    spec.append(("head.traj.b", (cfg.mode_count * t6,)))
    spec.append(("head.score.w", (cfg.mode_count, w)))
    spec.append(("head.score.b", (cfg.mode_count,)))
    if cfg.has_approx_head:
        spec.append(("head.approx.w", (cfg.future_steps * 2, w)))
        spec.append(("head.approx.b", (cfg.future_steps * 2,)))
    if cfg.has_detail_heads:
        for l in range(1, cfg.levels + 1):
            spec.append((f"head.detail{l}.w", (cfg.future_steps * 2, w)))
            spec.append((f"head.detail{l}.b", (cfg.future_steps * 2,)))
    return spec


def init_params(cfg: PolicyConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Trunk/refine weights uniform in +-1/sqrt(fan_in); heads start at zero so
    the initial plan is the zero trajectory."""
    params = {}
    for name, shape in param_spec(cfg):
        if name.startswith("head.") or len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[1])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def flatten_params(params: dict, cfg: PolicyConfig) -> np.ndarray:
    return np.concatenate([params[name].ravel() for name, _ in param_spec(cfg)])


def unflatten_params(flat, cfg: PolicyConfig) -> dict[str, np.ndarray]:
    flat = np.asarray(flat, dtype=float)
    params, offset = {}, 0
    for name, shape in param_spec(cfg):
        size = int(np.prod(shape))
        params[name] = flat[offset : offset + size].reshape(shape).copy()
        offset += size
    if offset != flat.shape[0]:
        raise ValueError(f"flat vector has {flat.shape[0]} entries, expected {offset}")
    return params


@dataclass
class PolicyOutput:
    trajectories: np.ndarray  # (B, M, T, 6)
    scores: np.ndarray  # (B, M)
    approx_full: np.ndarray | None = None  # (B, T, 2)
    approx: np.ndarray | None = None  # (B, T/2^N, 2)
    details_full: list[np.ndarray] = field(default_factory=list)  # each (B, T, 2)
    details: list[np.ndarray] = field(default_factory=list)  # strided


@dataclass
class OutputGrads:
    """Upstream gradients in the downsampled domain (as the losses see it)."""

    d_trajectories: np.ndarray
    d_scores: np.ndarray
    d_approx: np.ndarray | None = None
    d_details: list[np.ndarray] | None = None


def forward(params: dict, features, cfg: PolicyConfig):
    """Batched forward pass; returns (PolicyOutput, cache-for-backward)."""
    f = np.asarray(features, dtype=float)
    squeeze = f.ndim == 1
    if squeeze:
        f = f[None, :]
    if f.shape[1] != cfg.feature_dim:
        raise ValueError(f"feature length {f.shape[1]} != config {cfg.feature_dim}")
    b = f.shape[0]

    h1 = np.tanh(f @ params["trunk.w1"].T + params["trunk.b1"])
    h2 = np.tanh(h1 @ params["trunk.w2"].T + params["trunk.b2"])

    states = [h2]
    refine_acts = []
    if cfg.detail_structure == "iterative":
        g = h2
        for i in range(1, cfg.levels + 1):
            u = np.tanh(g @ params[f"refine{i}.w"].T + params[f"refine{i}.b"])
            g = g + u
            refine_acts.append(u)
            states.append(g)
    final = states[-1]

    traj = final @ params["head.traj.w"].T + params["head.traj.b"]
    traj = traj.reshape(b, cfg.mode_count, cfg.future_steps, 6)
    scores = final @ params["head.score.w"].T + params["head.score.b"]

    approx_full = approx = None
    details_full, details = [], []
    if cfg.has_detail_heads:
        approx_read = states[0] if cfg.detail_structure == "iterative" else h2
        if cfg.has_approx_head:
            approx_full = (approx_read @ params["head.approx.w"].T
                           + params["head.approx.b"]).reshape(b, cfg.future_steps, 2)
            approx = approx_full[:, :: 2 ** cfg.levels, :]
        for l in range(1, cfg.levels + 1):
            read = states[l] if cfg.detail_structure == "iterative" else h2
            full = (read @ params[f"head.detail{l}.w"].T
                    + params[f"head.detail{l}.b"]).reshape(b, cfg.future_steps, 2)
            details_full.append(full)
            details.append(full[:, :: cfg.detail_stride(l), :])

    out = PolicyOutput(traj, scores, approx_full, approx, details_full, details)
    cache = {"f": f, "h1": h1, "h2": h2, "states": states,
             "refine_acts": refine_acts, "squeeze": squeeze}
    return out, cache


def backward(params: dict, cache: dict, grads: OutputGrads, cfg: PolicyConfig) -> dict:
    """Exact gradients of <grads, outputs> with respect to every parameter."""
    f, h1, h2 = cache["f"], cache["h1"], cache["h2"]
    states, refine_acts = cache["states"], cache["refine_acts"]
    b = f.shape[0]

    d_states = [np.zeros_like(h2) for _ in states]
    g = {name: np.zeros_like(arr) for name, arr in params.items()}

    d_traj = np.asarray(grads.d_trajectories, dtype=float).reshape(b, -1)
    final = states[-1]
    g["head.traj.w"] += d_traj.T @ final
    g["head.traj.b"] += d_traj.sum(axis=0)
    d_states[-1] += d_traj @ params["head.traj.w"]

    d_scores = np.asarray(grads.d_scores, dtype=float).reshape(b, -1)
    g["head.score.w"] += d_scores.T @ final
    g["head.score.b"] += d_scores.sum(axis=0)
    d_states[-1] += d_scores @ params["head.score.w"]

    if cfg.has_detail_heads:
        if cfg.has_approx_head and grads.d_approx is not None:
            full = np.zeros((b, cfg.future_steps, 2))
            full[:, :: 2 ** cfg.levels, :] = grads.d_approx
            flat = full.reshape(b, -1)
            read = states[0] if cfg.detail_structure == "iterative" else h2
            g["head.approx.w"] += flat.T @ read
            g["head.approx.b"] += flat.sum(axis=0)
            contrib = flat @ params["head.approx.w"]
            if cfg.detail_structure == "iterative":
                d_states[0] += contrib
            else:
                d_states[-1] += contrib
        if grads.d_details is not None:
            for l, d_ds in enumerate(grads.d_details, start=1):
                if d_ds is None:
                    continue
                full = np.zeros((b, cfg.future_steps, 2))
                full[:, :: cfg.detail_stride(l), :][:, : d_ds.shape[1], :] = d_ds
                flat = full.reshape(b, -1)
                read = states[l] if cfg.detail_structure == "iterative" else h2
                g[f"head.detail{l}.w"] += flat.T @ read
                g[f"head.detail{l}.b"] += flat.sum(axis=0)
                contrib = flat @ params[f"head.detail{l}.w"]
                if cfg.detail_structure == "iterative":
                    d_states[l] += contrib
                else:
                    d_states[-1] += contrib

    # Residual refine chain, back to the trunk output.
    d_g = d_states[-1]
    if cfg.detail_structure == "iterative":
        for i in range(cfg.levels, 0, -1):
            u = refine_acts[i - 1]
            d_z = d_g * (1.0 - u ** 2)
            g[f"refine{i}.w"] += d_z.T @ states[i - 1]
            g[f"refine{i}.b"] += d_z.sum(axis=0)
            d_g = d_g + d_z @ params[f"refine{i}.w"] + d_states[i - 1]

    d_z2 = d_g * (1.0 - h2 ** 2)
    g["trunk.w2"] += d_z2.T @ h1
    g["trunk.b2"] += d_z2.sum(axis=0)
    d_h1 = d_z2 @ params["trunk.w2"]
    d_z1 = d_h1 * (1.0 - h1 ** 2)
    g["trunk.w1"] += d_z1.T @ f
    g["trunk.b1"] += d_z1.sum(axis=0)
    return g


def select_mode(output: PolicyOutput, sample: int = 0) -> int:
    """Highest-scoring mode; ties break toward the lowest index."""
    scores = output.scores[sample]
    return int(np.argmax(scores))


def selected_trajectory(output: PolicyOutput, dt: float, sample: int = 0) -> Trajectory:
    idx = select_mode(output, sample)
    return Trajectory(output.trajectories[sample, idx].copy(), dt=dt)


# ---------------------------------------------------------------------------
# Observation featurization


def feature_dim(plan: PlanConfig) -> int:
    return plan.history_steps * 6 + 4 + 2 + 3 + len(CURV_LOOKAHEADS)


def _lane_geometry(lane: np.ndarray, position: np.ndarray):
    """Arc position, signed lateral offset and tangent of the point projected
    onto the (assumed near-straight) reference polyline."""
    start, end = lane[0], lane[-1]
    direction = end - start
    length = np.linalg.norm(direction)
    if length <= 0:
        raise ValueError("degenerate lane polyline")
    direction = direction / length
    rel = position - start
    s = float(rel @ direction)
    lateral = float(direction[0] * rel[1] - direction[1] * rel[0])
    return s, lateral, direction


def _lane_curvature(lane: np.ndarray, s: float) -> float:
    """Menger curvature of the polyline around arc position s."""
    seg = np.linalg.norm(np.diff(lane, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    idx = int(np.searchsorted(arc, s))
    idx = max(1, min(idx, lane.shape[0] - 2))
    a, b_, c = lane[idx - 1], lane[idx], lane[idx + 1]
    area2 = (b_[0] - a[0]) * (c[1] - a[1]) - (b_[1] - a[1]) * (c[0] - a[0])
    denom = np.linalg.norm(b_ - a) * np.linalg.norm(c - b_) * np.linalg.norm(c - a)
    if denom < 1e-12:
        return 0.0
    return float(2.0 * area2 / denom)


def featurize(obs: Observation, plan: PlanConfig) -> np.ndarray:
    """Fixed-length ego-frame feature vector for one observation."""
    hist = np.asarray(obs.ego_history, dtype=float)
    if hist.shape != (plan.history_steps, 6):
        raise ValueError(
            f"ego_history must be ({plan.history_steps}, 6), got {hist.shape}"
        )
    cur = hist[-1]
    rel = to_ego_frame(hist, cur)
    hist_block = np.column_stack([
        rel[:, 0] * POS_SCALE,
        rel[:, 1] * LAT_SCALE,
        rel[:, 2] - 1.0,
        rel[:, 3],
        rel[:, 4] * VEL_SCALE,
        rel[:, 5] * LAT_VEL_SCALE,
    ]).ravel()

    c, s = cur[2], cur[3]
    pos = cur[0:2]
    if obs.visible_obstacles:
        nearest = min(
            obs.visible_obstacles,
            key=lambda o: float(np.linalg.norm(o.center - pos)),
        )
        dx, dy = nearest.center - pos
        obstacle_block = np.array([
            1.0,
            (c * dx + s * dy) * POS_SCALE,
            (-s * dx + c * dy) * LAT_SCALE,
            nearest.radius,
        ])
    else:
        obstacle_block = np.zeros(4)

    s_ego, lateral, direction = _lane_geometry(np.asarray(obs.lane, dtype=float), pos)
    if obs.signal_position is not None:
        dist = float(np.clip(obs.signal_position - s_ego, *SIGNAL_CLIP))
        signal_block = np.array([
            1.0 if obs.signal_state == "red" else 0.0,
            dist * POS_SCALE,
        ])
    else:
        signal_block = np.zeros(2)

    cos_err = c * direction[0] + s * direction[1]
    sin_err = s * direction[0] - c * direction[1]
    lane_block = np.array([lateral * LAT_SCALE, cos_err - 1.0, sin_err])
    curv_block = np.array([
        _lane_curvature(obs.lane, s_ego + la) * CURV_SCALE for la in CURV_LOOKAHEADS
    ])

    return np.concatenate([hist_block, obstacle_block, signal_block,
                           lane_block, curv_block])


class LearnedPlanner:
    """Planner-protocol wrapper: featurize -> forward -> best-scored mode."""

    def __init__(self, params: dict, cfg: PolicyConfig, plan: PlanConfig):
        cfg.validate()
        self.params = params
        self.cfg = cfg
        self.plan_cfg = plan

    def plan(self, obs: Observation) -> Trajectory:
        features = featurize(obs, self.plan_cfg)
        out, _ = forward(self.params, features, self.cfg)
        return selected_trajectory(out, self.plan_cfg.dt)


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path, params: dict, cfg: PolicyConfig, seed: int, step: int,
                    extra: dict | None = None) -> None:
    flat = flatten_params(params, cfg)
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": "policy",
        "policy": asdict(cfg),
        "seed": int(seed),
        "step": int(step),
        "extra": extra or {},
        "param_layout": [[name, list(shape)] for name, shape in param_spec(cfg)],
        "params": base64.b64encode(flat.astype("<f8").tobytes()).decode("ascii"),
    }
    with open(path, "w") as fh:
        json.dump(blob, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> dict:
    """Returns {"kind", "params", "config", "seed", "step", "extra"}; "expert"
    blobs carry no parameters."""
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a scopekit checkpoint: {path}")
    if blob.get("kind") == "expert":
        return {"kind": "expert", "extra": blob.get("extra", {})}
    cfg = PolicyConfig(**blob["policy"])
    layout = [(name, tuple(shape)) for name, shape in blob["param_layout"]]
    if layout != param_spec(cfg):
        raise ValueError("checkpoint parameter layout does not match its config")
    flat = np.frombuffer(base64.b64decode(blob["params"]), dtype="<f8")
    params = unflatten_params(flat, cfg)
    return {
        "kind": "policy",
        "params": params,
        "config": cfg,
        "seed": int(blob["seed"]),
        "step": int(blob["step"]),
        "extra": blob.get("extra", {}),
    }

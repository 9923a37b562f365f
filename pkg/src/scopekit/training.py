"""Demonstration datasets, the composed training objective, and the trainer.

The objective glues policy outputs to the loss terms: weighted regression on
the closest mode, mode-score cross entropy, collision hinge against visible
obstacles, and the multi-level decision-scope loss when a detail scheme is
configured.  Everything is deterministic given (config, dataset, seed):
batches are shuffled by a seeded generator and all reductions run in fixed
index order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .core import PlanConfig, to_ego_frame, fmt_float, write_csv
from .losses import (
    CircleSet,
    LossBreakdown,
    closest_mode,
    collision_loss,
    collision_loss_grad,
    log_softmax,
    scope_loss,
    scope_loss_grad,
    smooth_l1,
    smooth_l1_grad,
    total_loss,
    ScopeComponents,
)
from .policy import (
    OutputGrads,
    PolicyConfig,
    backward,
    feature_dim,
    featurize,
    forward,
    init_params,
)
from .simulator import EpisodeLog, lane_frame_pose, observe
from .wavelet import decompose, downsample_within_horizon
from .weights import (
    GpParams,
    WeightSchedule,
    decay_weights,
    timenorm_weights,
    truncation_weights,
    uniform_weights,
)

WEIGHT_SCHEMES = ("uniform", "truncation", "decay", "timenorm")


class TrainingAborted(RuntimeError):
    """Non-finite loss or gradient; carries the last good parameters."""

    def __init__(self, message, params, log_rows):
        super().__init__(message)
        self.params = params
        self.log_rows = log_rows


@dataclass
class Sample:
    features: np.ndarray
    target: np.ndarray  # (T_f, 6), ego frame at the sample step
    obstacles: np.ndarray  # (K, 3): ego-frame center x, y, radius
    episode_index: int
    step: int


@dataclass
class TrainConfig:
    seed: int = 0
    plan: PlanConfig = field(default_factory=PlanConfig)
    hidden_width: int = 64
    weight_scheme: str = "uniform"
    truncation_steps: int = 20
    decay_length: float = math.e
    decay_order: float = 1.0
    # Inverse-mean weights need a floor at the per-step loss noise floor of
    # this sim (~1e-2); anything lower lets near-step weights amplify
    # optimizer noise by orders of magnitude and destabilize the trunk.
    timenorm_guard: float = 1e-2
    detail_structure: str = "none"  # none|multihead|iterative
    decomposition: str = "none"  # none|dwt|dwh
    use_cls: bool = True
    use_col: bool = True
    collision_tolerance: float = 0.1
    batch_size: int = 32
    epochs: int = 25
    learning_rate: float = 1e-3
    warmup_epochs: int = 3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 0.0
    stride: int = 10

    def validate(self) -> None:
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise ValueError(f"unknown weight scheme {self.weight_scheme!r}")
        plan_errors = self.plan.validate()
        if plan_errors:
            raise ValueError("; ".join(plan_errors))
        if self.weight_scheme == "truncation" and not (
            1 <= self.truncation_steps <= self.plan.future_steps
        ):
            raise ValueError("truncation_steps out of range")
        if (self.detail_structure == "none") != (self.decomposition == "none"):
            raise ValueError("detail structure and decomposition must be set together")
        if self.batch_size < 1 or self.epochs < 0 or self.stride < 1:
            raise ValueError("batch_size/epochs/stride out of range")

    def policy_config(self) -> PolicyConfig:
        cfg = PolicyConfig(
            feature_dim=feature_dim(self.plan),
            hidden_width=self.hidden_width,
            mode_count=self.plan.mode_count,
            future_steps=self.plan.future_steps,
            levels=self.plan.wavelet_levels,
            detail_structure=self.detail_structure,
            decomposition=self.decomposition,
        )
        cfg.validate()
        return cfg

    def detail_horizons(self) -> list[int]:
        """Per-level mask lengths from the single horizon knob h:
        floor(h / 2^(l-1)) samples at detail level l (dwt); the strided stack
        (dwh) is truncated to h samples per level at decomposition time."""
        h = self.plan.ds_horizon
        t = self.plan.future_steps
        out = []
        for l in range(1, self.plan.wavelet_levels + 1):
            cap = t // (2 ** l)
            out.append(min(h // (2 ** (l - 1)), cap))
        return out

    # -- JSON config file schema -------------------------------------------
    # Weight schemes are spelled as at most one sub-block of "weights";
    # detail supervision as the optional "detail" block.

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        cfg = cls()
        cfg.seed = int(d.get("seed", 0))
        cfg.plan = PlanConfig(**d.get("plan", {}))
        cfg.hidden_width = int(d.get("policy", {}).get("hidden_width", 64))

        weights = d.get("weights", {})
        if len(weights) > 1:
            raise ValueError(
                f"weight schemes are exclusive, got {sorted(weights)}"
            )
        if weights:
            scheme, params = next(iter(weights.items()))
            if scheme not in WEIGHT_SCHEMES:
                raise ValueError(f"unknown weight scheme {scheme!r}")
            cfg.weight_scheme = scheme
            if scheme == "truncation":
                cfg.truncation_steps = int(params["steps"])
            elif scheme == "decay":
                cfg.decay_length = float(params.get("length", math.e))
                cfg.decay_order = float(params.get("order", 1.0))
            elif scheme == "timenorm":
                cfg.timenorm_guard = float(params.get("guard", cfg.timenorm_guard))

        detail = d.get("detail", {})
        if detail:
            cfg.detail_structure = detail["structure"]
            cfg.decomposition = detail["decomposition"]
            if "horizon" in detail:
                cfg.plan.ds_horizon = int(detail["horizon"])

        loss = d.get("loss", {})
        cfg.use_cls = bool(loss.get("use_cls", True))
        cfg.use_col = bool(loss.get("use_col", True))
        cfg.collision_tolerance = float(loss.get("collision_tolerance", 0.1))

        train = d.get("train", {})
        cfg.batch_size = int(train.get("batch_size", 32))
        cfg.epochs = int(train.get("epochs", 25))
        cfg.learning_rate = float(train.get("learning_rate", 1e-3))
        cfg.warmup_epochs = int(train.get("warmup_epochs", 3))
        cfg.beta1 = float(train.get("beta1", 0.9))
        cfg.beta2 = float(train.get("beta2", 0.999))
        cfg.adam_eps = float(train.get("eps", 1e-8))
        cfg.grad_clip = float(train.get("grad_clip", 0.0))
        cfg.stride = int(train.get("stride", 10))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "plan": asdict(self.plan),
            "policy": {"hidden_width": self.hidden_width},
            "loss": {
                "use_cls": self.use_cls,
                "use_col": self.use_col,
                "collision_tolerance": self.collision_tolerance,
            },
            "train": {
                "batch_size": self.batch_size,
                "epochs": self.epochs,
                "learning_rate": self.learning_rate,
                "warmup_epochs": self.warmup_epochs,
                "beta1": self.beta1,
                "beta2": self.beta2,
                "eps": self.adam_eps,
                "grad_clip": self.grad_clip,
                "stride": self.stride,
            },
        }
        if self.weight_scheme == "truncation":
            d["weights"] = {"truncation": {"steps": self.truncation_steps}}
        elif self.weight_scheme == "decay":
            d["weights"] = {"decay": {"length": self.decay_length,
                                      "order": self.decay_order}}
        elif self.weight_scheme == "timenorm":
            d["weights"] = {"timenorm": {"guard": self.timenorm_guard}}
        if self.detail_structure != "none":
            d["detail"] = {
                "structure": self.detail_structure,
                "decomposition": self.decomposition,
                "horizon": self.plan.ds_horizon,
            }
        return d


# ---------------------------------------------------------------------------
# Dataset


def build_dataset(episodes: list[EpisodeLog], stride: int,
                  plan: PlanConfig) -> list[Sample]:
    """One sample every ``stride`` steps per expert episode; samples whose
    target would run off the end of the log are dropped."""
    if not episodes:
        raise ValueError("no episodes to build a dataset from")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    samples = []
    horizon = plan.future_steps
    for ei, log in enumerate(episodes):
        if log.kind != "expert":
            raise ValueError(f"episode {ei} is not an expert log")
        n = log.states.shape[0]
        for t in range(0, n, stride):
            if t + horizon > n - 1:
                break
            obs = observe(log.scenario, log.states[: t + 1], t, plan.history_steps)
            features = featurize(obs, plan)
            # Targets live in the lane-aligned frame at the sample position,
            # matching the frame plans are executed in.
            pose = lane_frame_pose(log.states[t])
            target = to_ego_frame(log.states[t + 1 : t + 1 + horizon], pose)
            obstacles = np.zeros((len(obs.visible_obstacles), 3))
            c, s = pose[2], pose[3]
            for k, o in enumerate(obs.visible_obstacles):
                dx, dy = o.center - pose[0:2]
                obstacles[k] = (c * dx + s * dy, -s * dx + c * dy, o.radius)
            samples.append(Sample(features, target, obstacles, ei, t))
    return samples


def make_schedule(cfg: TrainConfig) -> WeightSchedule | None:
    """Fixed schedule for the configured scheme; None means per-batch timenorm."""
    t = cfg.plan.future_steps
    if cfg.weight_scheme == "uniform":
        return uniform_weights(t)
    if cfg.weight_scheme == "truncation":
        return truncation_weights(cfg.truncation_steps, t)
    if cfg.weight_scheme == "decay":
        return decay_weights(t, GpParams(length=cfg.decay_length,
                                         order=cfg.decay_order))
    return None


# ---------------------------------------------------------------------------
# Composed objective


def batch_objective(params, pcfg: PolicyConfig, batch: list[Sample],
                    cfg: TrainConfig, schedule_override: WeightSchedule | None = None):
    """Loss breakdown plus exact parameter gradients for one mini-batch.

    Timenorm weights are recomputed from this batch's per-step losses and
    treated as constants in the gradient (statistics are not differentiated
    through).  ``schedule_override`` pins the schedule explicitly, which the
    finite-difference tests use to probe that stop-gradient semantic.
    """
    b = len(batch)
    t_f = pcfg.future_steps
    features = np.stack([s.features for s in batch])
    targets = np.stack([s.target for s in batch])

    out, cache = forward(params, features, pcfg)

    select_step = (cfg.truncation_steps - 1 if cfg.weight_scheme == "truncation"
                   else t_f - 1)
    mode_idx = np.array([
        closest_mode(out.trajectories[i], targets[i], select_step)
        for i in range(b)
    ])
    sel = out.trajectories[np.arange(b), mode_idx]  # (B, T, 6)

    step_losses = smooth_l1(sel, targets).mean(axis=2)  # (B, T)
    if schedule_override is not None:
        schedule = schedule_override
    elif cfg.weight_scheme == "timenorm":
        schedule = timenorm_weights(step_losses, cfg.timenorm_guard)
    else:
        schedule = make_schedule(cfg)
    w = schedule.weights

    reg = float((step_losses * w[None, :]).mean(axis=1).mean())
    per_step_reg = step_losses.mean(axis=0)

    d_traj = np.zeros_like(out.trajectories)
    d_sel = smooth_l1_grad(sel, targets) * w[None, :, None] / (b * t_f * 6)

    cls = 0.0
    d_scores = np.zeros_like(out.scores)
    if cfg.use_cls:
        for i in range(b):
            ls = log_softmax(out.scores[i])
            cls += float(-ls[mode_idx[i]])
            g = np.exp(ls)
            g[mode_idx[i]] -= 1.0
            d_scores[i] = g / b
        cls /= b

    col = 0.0
    if cfg.use_col:
        for i in range(b):
            obstacles = batch[i].obstacles
            k = obstacles.shape[0]
            if k == 0:
                continue
            pos = sel[i, :, 0:2]
            circles = CircleSet(
                steps=np.repeat(np.arange(t_f), k),
                ego=np.repeat(pos, k, axis=0),
                agent=np.tile(obstacles[:, 0:2], (t_f, 1)),
                radius_sum=np.tile(obstacles[:, 2], t_f),
                tolerance=np.full(t_f * k, cfg.collision_tolerance),
                horizon=t_f,
            )
            col += collision_loss(circles) / b
            g = collision_loss_grad(circles).reshape(t_f, k, 2).sum(axis=1)
            d_sel[i, :, 0:2] += g / b

    for i in range(b):
        d_traj[i, mode_idx[i]] = d_sel[i]

    ds = 0.0
    d_approx = None
    d_details = None
    if pcfg.has_detail_heads:
        horizons = cfg.detail_horizons()
        if pcfg.has_approx_head:
            d_approx = np.zeros_like(out.approx)
        d_details = [np.zeros_like(d) for d in out.details]
        for i in range(b):
            target_pos = targets[i, :, 0:2]
            if cfg.decomposition == "dwt":
                tgt = decompose(target_pos, pcfg.levels)
                pred = ScopeComponents(
                    details=[d[i] for d in out.details],
                    approx=out.approx[i],
                )
                ds_i = scope_loss(pred, tgt, horizons)
                grad = scope_loss_grad(pred, tgt, horizons)
                d_approx[i] = grad.approx / b
            else:
                tgt = downsample_within_horizon(target_pos, pcfg.levels,
                                                cfg.plan.ds_horizon)
                pred = ScopeComponents(details=[d[i] for d in out.details])
                ds_i = scope_loss(pred, tgt, None)
                grad = scope_loss_grad(pred, tgt, None)
            ds += ds_i / b
            for l in range(pcfg.levels):
                d_details[l][i] = grad.details[l] / b

    breakdown = total_loss(reg=reg, cls=cls, col=col, ds=ds,
                           per_step_reg=per_step_reg)
    grads = backward(params, cache,
                     OutputGrads(d_traj, d_scores, d_approx, d_details), pcfg)
    return breakdown, grads, schedule


# ---------------------------------------------------------------------------
# Optimizer and training loop


class Adam:
    def __init__(self, params: dict, lr: float, beta1: float, beta2: float,
                 eps: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr_scale: float = 1.0) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction = (math.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t))
        lr = self.lr * lr_scale * correction
        for key in params:
            g = grads[key]
            self.m[key] = b1 * self.m[key] + (1.0 - b1) * g
            self.v[key] = b2 * self.v[key] + (1.0 - b2) * g * g
            params[key] -= lr * self.m[key] / (np.sqrt(self.v[key]) + self.eps)


@dataclass
class TrainResult:
    params: dict
    policy_config: PolicyConfig
    log_rows: list
    steps: int


def train_run(cfg: TrainConfig, dataset: list[Sample]) -> TrainResult:
    """Seeded mini-batch training; deterministic given (cfg, dataset)."""
    cfg.validate()
    if not dataset:
        raise ValueError("dataset is empty")
    if cfg.batch_size > len(dataset):
        raise ValueError(
            f"batch_size {cfg.batch_size} exceeds dataset size {len(dataset)}"
        )
    pcfg = cfg.policy_config()
    rng = np.random.default_rng(cfg.seed)
    params = init_params(pcfg, rng)
    adam = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)

    n = len(dataset)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    warmup_steps = cfg.warmup_epochs * steps_per_epoch
    rows = []
    step = 0
    for _epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = [dataset[j] for j in perm[start : start + cfg.batch_size]]
            breakdown, grads, _ = batch_objective(params, pcfg, batch, cfg)
            finite = np.isfinite(breakdown.total) and all(
                np.isfinite(g).all() for g in grads.values()
            )
            if not finite:
                raise TrainingAborted(
                    f"non-finite loss/gradient at step {step}", params, rows
                )
            if cfg.grad_clip > 0:
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > cfg.grad_clip:
                    scale = cfg.grad_clip / norm
                    grads = {k: g * scale for k, g in grads.items()}
            lr_scale = 1.0
            if warmup_steps > 0:
                lr_scale = min(1.0, (step + 1) / warmup_steps)
            adam.step(params, grads, lr_scale)
            rows.append((step, breakdown.reg, breakdown.cls, breakdown.col,
                         breakdown.ds, breakdown.total))
            step += 1
    return TrainResult(params=params, policy_config=pcfg, log_rows=rows, steps=step)


def write_training_log(rows, path) -> None:
    out = [[r[0]] + [fmt_float(v) for v in r[1:]] for r in rows]
    write_csv(path, ("step", "reg", "cls", "col", "ds", "total"), out)

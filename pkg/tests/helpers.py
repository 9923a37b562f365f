"""Shared test utilities: random instances and the finite-difference oracle."""

from __future__ import annotations

import numpy as np

from scopekit.core import PlanConfig
from scopekit.policy import flatten_params, init_params, unflatten_params
from scopekit.training import Sample, TrainConfig, batch_objective

FD_STEP = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7

GRADCHECK_COMBOS = (
    ("uniform", "none", "none"),
    ("truncation", "none", "none"),
    ("decay", "none", "none"),
    ("timenorm", "none", "none"),
    ("uniform", "multihead", "dwt"),
    ("uniform", "multihead", "dwh"),
    ("uniform", "iterative", "dwt"),
    ("uniform", "iterative", "dwh"),
)


def small_train_config(scheme="uniform", structure="none", decomp="none",
                       future_steps=8, levels=2, hidden=6, modes=2) -> TrainConfig:
    plan = PlanConfig(future_steps=future_steps, history_steps=3,
                      mode_count=modes, wavelet_levels=levels,
                      ds_horizon=max(1, future_steps // 2), dt=0.1)
    cfg = TrainConfig(plan=plan, hidden_width=hidden, weight_scheme=scheme,
                      truncation_steps=max(1, future_steps // 2),
                      detail_structure=structure, decomposition=decomp)
    cfg.validate()
    return cfg


def random_instance(cfg: TrainConfig, rng: np.random.Generator, batch_size=1):
    """Random (params, batch) for the objective; params are non-degenerate."""
    pcfg = cfg.policy_config()
    params = {k: rng.normal(0.0, 0.4, np.shape(v))
              for k, v in init_params(pcfg, rng).items()}
    batch = []
    for _ in range(batch_size):
        feats = rng.normal(0.0, 1.0, pcfg.feature_dim)
        target = rng.normal(0.0, 2.0, (cfg.plan.future_steps, 6))
        obstacles = np.column_stack([
            rng.normal(0.0, 3.0, (2, 2)),
            rng.uniform(0.3, 1.0, (2, 1)),
        ])
        batch.append(Sample(feats, target, obstacles, 0, 0))
    return pcfg, params, batch


def _instance_margins_ok(pcfg, params, batch, cfg) -> bool:
    """Reject instances sitting on loss kinks where central differences lie."""
    from scopekit.losses import closest_mode, smooth_l1

    breakdown, _, _ = batch_objective(params, pcfg, batch, cfg)
    if not np.isfinite(breakdown.total):
        return False
    from scopekit.policy import forward

    features = np.stack([s.features for s in batch])
    targets = np.stack([s.target for s in batch])
    out, _ = forward(params, features, pcfg)
    t_f = pcfg.future_steps
    select_step = (cfg.truncation_steps - 1 if cfg.weight_scheme == "truncation"
                   else t_f - 1)
    for i, sample in enumerate(batch):
        errs = np.linalg.norm(
            out.trajectories[i, :, select_step, 0:2] - targets[i, select_step, 0:2],
            axis=-1,
        )
        order = np.sort(errs)
        if len(order) > 1 and order[1] - order[0] < 1e-3:
            return False
        m = closest_mode(out.trajectories[i], targets[i], select_step)
        diff = np.abs(out.trajectories[i, m] - targets[i])
        if np.any(np.abs(diff - 1.0) < 1e-3):
            return False
        pos = out.trajectories[i, m, :, 0:2]
        obstacles = sample.obstacles
        if obstacles.shape[0]:
            d = np.linalg.norm(pos[:, None, :] - obstacles[None, :, 0:2], axis=-1)
            pen = obstacles[None, :, 2] + cfg.collision_tolerance - d
            if np.any(np.abs(pen) < 1e-3):
                return False
    return True


def sampled_instance(cfg, rng, batch_size=1, max_tries=50):
    for _ in range(max_tries):
        pcfg, params, batch = random_instance(cfg, rng, batch_size)
        if _instance_margins_ok(pcfg, params, batch, cfg):
            return pcfg, params, batch
    raise RuntimeError("could not draw a kink-free gradcheck instance")


def fd_check_objective(cfg, rng, n_coords=6, batch_size=1):
    """Worst relative error between analytic and central-difference gradients
    over ``n_coords`` randomly chosen parameter coordinates."""
    pcfg, params, batch = sampled_instance(cfg, rng, batch_size)
    breakdown, grads, schedule = batch_objective(params, pcfg, batch, cfg)
    flat_p = flatten_params(params, pcfg)
    flat_g = flatten_params(grads, pcfg)
    coords = rng.choice(flat_p.size, size=min(n_coords, flat_p.size), replace=False)
    worst = 0.0
    for j in coords:
        shifted = flat_p.copy()
        shifted[j] += FD_STEP
        plus = batch_objective(unflatten_params(shifted, pcfg), pcfg, batch, cfg,
                               schedule_override=schedule)[0].total
        shifted = flat_p.copy()
        shifted[j] -= FD_STEP
        minus = batch_objective(unflatten_params(shifted, pcfg), pcfg, batch, cfg,
                                schedule_override=schedule)[0].total
        fd = (plus - minus) / (2.0 * FD_STEP)
        denom = max(abs(fd), abs(flat_g[j]), ABS_FLOOR)
        worst = max(worst, abs(fd - flat_g[j]) / denom)
    return worst

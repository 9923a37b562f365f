"""Training loss terms and their analytic gradients.

Every loss here is paired with a gradient function with respect to the
prediction, so the training loop and the finite-difference oracle in the
tests can both drive them.  Reductions run in fixed ascending-index order for
bitwise reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Trajectory
from .wavelet import ScopedStack, WaveletPyramid
from .weights import WeightSchedule


def _matrix(x) -> np.ndarray:
    if isinstance(x, Trajectory):
        return x.data
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Smooth L1


def smooth_l1(pred, target) -> np.ndarray:
    """Elementwise smooth L1: 0.5*d^2 for |d| < 1, |d| - 0.5 otherwise."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    d = p - t
    ad = np.abs(d)
    return np.where(ad < 1.0, 0.5 * d * d, ad - 0.5)


def smooth_l1_grad(pred, target) -> np.ndarray:
    """d smooth_l1 / d pred, elementwise (clipped difference)."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return np.clip(p - t, -1.0, 1.0)


# ---------------------------------------------------------------------------
# Weighted regression


def per_step_regression(pred, target) -> np.ndarray:
    """(T,) vector: mean smooth-L1 over the 6 channels at each step."""
    p, t = _matrix(pred), _matrix(target)
    return smooth_l1(p, t).mean(axis=-1)


def weighted_regression_loss(pred, target, schedule: WeightSchedule):
    """Scalar w-weighted mean over time of the per-step regression loss.

    Returns (scalar, per_step) where per_step is unweighted.
    """
    per_step = per_step_regression(pred, target)
    w = schedule.weights
    if w.shape[0] != per_step.shape[0]:
        raise ValueError(
            f"schedule length {w.shape[0]} != trajectory length {per_step.shape[0]}"
        )
    return float((per_step * w).mean()), per_step


def weighted_regression_grad(pred, target, schedule: WeightSchedule) -> np.ndarray:
    """(T, 6) gradient of the weighted regression scalar w.r.t. pred."""
    p, t = _matrix(pred), _matrix(target)
    w = schedule.weights
    n_steps, n_ch = p.shape
    return smooth_l1_grad(p, t) * w[:, None] / (n_steps * n_ch)


# ---------------------------------------------------------------------------
# Multi-level decision-scope loss


@dataclass
class ScopeComponents:
    """Prediction-side counterpart of a pyramid or scoped stack: per-level
    detail arrays plus an optional approximation."""

    details: list[np.ndarray]
    approx: np.ndarray | None = None


def _scope_terms(pred: ScopeComponents, target, horizons):
    """Yield (pred_block, target_block) pairs, one per loss term."""
    if isinstance(target, WaveletPyramid):
        tgt_details = target.details
        tgt_approx = target.approx
    elif isinstance(target, ScopedStack):
        tgt_details = target.levels
        tgt_approx = None
    else:
        raise TypeError(f"unsupported scope target: {type(target).__name__}")
    if len(pred.details) != len(tgt_details):
        raise ValueError(
            f"prediction has {len(pred.details)} detail levels, "
            f"target has {len(tgt_details)}"
        )
    if horizons is None:
        horizons = [len(t) for t in tgt_details]
    if len(horizons) != len(tgt_details):
        raise ValueError("one horizon per detail level required")
    pairs = []
    for l, (p, t, h) in enumerate(zip(pred.details, tgt_details, horizons), start=1):
        if not (0 <= h <= len(t)):
            raise ValueError(
                f"horizon {h} out of range [0, {len(t)}] at level {l}"
            )
        if len(p) < h:
            raise ValueError(
                f"prediction at level {l} has {len(p)} rows, needs >= {h}"
            )
        pairs.append((p[:h], t[:h]))
    if tgt_approx is not None:
        if pred.approx is None:
            raise ValueError("target has an approximation but prediction does not")
        if pred.approx.shape != tgt_approx.shape:
            raise ValueError(
                f"approximation shape mismatch: {pred.approx.shape} vs {tgt_approx.shape}"
            )
        pairs.append((pred.approx, tgt_approx))
    return pairs


def scope_loss(pred: ScopeComponents, target, horizons=None) -> float:
    """Mean over components of the L2 norm of the horizon-masked difference.

    For a pyramid target the terms are the N masked detail levels plus the
    unmasked approximation (N+1 terms); a scoped-stack target contributes its
    N truncated levels (the truncation is the mask).
    """
    pairs = _scope_terms(pred, target, horizons)
    terms = [float(np.linalg.norm(p - t)) for p, t in pairs]
    return float(np.sum(terms) / len(pairs))


def scope_loss_grad(pred: ScopeComponents, target, horizons=None) -> ScopeComponents:
    """Gradients w.r.t. each prediction component (zero outside the mask)."""
    pairs = _scope_terms(pred, target, horizons)
    n = len(pairs)
    d_details = [np.zeros_like(p) for p in pred.details]
    d_approx = None if pred.approx is None else np.zeros_like(pred.approx)
    for idx, (p, t) in enumerate(pairs):
        diff = p - t
        norm = np.linalg.norm(diff)
        if norm == 0.0:
            continue
        g = diff / (norm * n)
        if idx < len(pred.details):
            d_details[idx][: len(p)] = g
        else:
            d_approx[...] = g
    return ScopeComponents(details=d_details, approx=d_approx)


# ---------------------------------------------------------------------------
# Collision loss


@dataclass
class CircleSet:
    """Circle-pair soup over a planning horizon.

    Each entry i pairs an ego circle center with an agent circle center at
    timestep ``steps[i]``; ``radius_sum`` is the sum of the two outline radii
    and ``tolerance`` the extra clearance.  ``horizon`` is the number of
    future steps the loss averages over.
    """

    steps: np.ndarray
    ego: np.ndarray
    agent: np.ndarray
    radius_sum: np.ndarray
    tolerance: np.ndarray
    horizon: int

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=int)
        self.ego = np.asarray(self.ego, dtype=float).reshape(-1, 2)
        self.agent = np.asarray(self.agent, dtype=float).reshape(-1, 2)
        self.radius_sum = np.asarray(self.radius_sum, dtype=float)
        self.tolerance = np.asarray(self.tolerance, dtype=float)
        n = self.steps.shape[0]
        if not (self.ego.shape[0] == self.agent.shape[0] == n
                and self.radius_sum.shape[0] == n and self.tolerance.shape[0] == n):
            raise ValueError("CircleSet arrays must share the same leading length")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if n and (self.radius_sum <= 0).any():
            raise ValueError("radii must be positive")

    @classmethod
    def empty(cls, horizon: int) -> "CircleSet":
        z = np.zeros((0,))
        return cls(z, np.zeros((0, 2)), np.zeros((0, 2)), z, z, horizon)


def _invasion(circles: CircleSet):
    diff = circles.ego - circles.agent
    dist = np.sqrt((diff ** 2).sum(axis=1))
    pen = circles.radius_sum + circles.tolerance - dist
    return diff, dist, pen


def collision_loss(circles: CircleSet) -> float:
    """Mean over the horizon of summed circle-pair invasion distances."""
    if circles.steps.shape[0] == 0:
        return 0.0
    _, _, pen = _invasion(circles)
    return float(np.maximum(0.0, pen).sum() / circles.horizon)


def collision_loss_grad(circles: CircleSet) -> np.ndarray:
    """(n, 2) gradient w.r.t. the ego centers."""
    if circles.steps.shape[0] == 0:
        return np.zeros((0, 2))
    diff, dist, pen = _invasion(circles)
    grad = np.zeros_like(circles.ego)
    active = pen > 0
    safe = dist[active]
    safe = np.where(safe > 0, safe, 1.0)  # coincident centers: zero subgradient
    grad[active] = -diff[active] / safe[:, None] / circles.horizon
    return grad


# ---------------------------------------------------------------------------
# Mode scoring


def log_softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    shifted = s - s.max()
    return shifted - np.log(np.exp(shifted).sum())


def mode_score_loss(scores, closest_index: int) -> float:
    """Cross entropy against the one-hot closest mode: -log softmax[closest]."""
    s = np.asarray(scores, dtype=float)
    if not (0 <= closest_index < s.shape[0]):
        raise ValueError(f"closest_index {closest_index} out of range for M={s.shape[0]}")
    return float(-log_softmax(s)[closest_index])


def mode_score_grad(scores, closest_index: int) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if not (0 <= closest_index < s.shape[0]):
        raise ValueError(f"closest_index {closest_index} out of range for M={s.shape[0]}")
    g = np.exp(log_softmax(s))
    g[closest_index] -= 1.0
    return g


def closest_mode(trajectories, target, position_step: int | None = None) -> int:
    """Index of the mode closest to the target by position error at one step.

    Defaults to the final waypoint; ties break toward the lowest index.
    """
    trajs = np.asarray(trajectories, dtype=float)
    tgt = _matrix(target)
    step = tgt.shape[0] - 1 if position_step is None else position_step
    if not (0 <= step < tgt.shape[0]):
        raise ValueError(f"position_step {step} out of range")
    err = np.linalg.norm(trajs[:, step, 0:2] - tgt[step, 0:2], axis=-1)
    return int(np.argmin(err))


# ---------------------------------------------------------------------------
# Aggregate


@dataclass
class LossBreakdown:
    reg: float = 0.0
    cls: float = 0.0
    col: float = 0.0
    ds: float = 0.0
    total: float = 0.0
    per_step_reg: np.ndarray = field(default_factory=lambda: np.zeros(0))


def total_loss(
    reg: float = 0.0,
    cls: float = 0.0,
    col: float = 0.0,
    ds: float = 0.0,
    per_step_reg=None,
) -> LossBreakdown:
    """Sum the enabled terms with unit coefficients; omitted terms are 0."""
    if per_step_reg is None:
        per_step_reg = np.zeros(0)
    return LossBreakdown(
        reg=float(reg),
        cls=float(cls),
        col=float(col),
        ds=float(ds),
        total=float(reg) + float(cls) + float(col) + float(ds),
        per_step_reg=np.asarray(per_step_reg, dtype=float),
    )

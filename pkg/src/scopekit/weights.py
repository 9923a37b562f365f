"""Per-timestep weight schedules for time-scoped regression supervision.

Three schemes:

* ``truncation`` — hard mask, ones up to a cut step then zeros;
* ``decay`` — exponentially decreasing weights derived from a Gaussian-process
  predictive-variance compensation, normalized so the weights average to 1;
* ``timenorm`` — inverse of the batch-mean per-step loss, so every timestep
  contributes the same expected magnitude (batch-normalization along time).

Weights apply to the per-step regression loss; all schemes are pure functions
of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TIMENORM_GUARD = 1e-6


@dataclass
class WeightSchedule:
    weights: np.ndarray
    scheme: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    def __len__(self) -> int:
        return int(self.weights.shape[0])


@dataclass
class GpParams:
    """Gaussian-process kernel parameters for the decaying-certainty weights.

    ``sigma_f2`` is the maximum (function) variance, ``length`` the time
    length scale, ``t0`` the observable current time, and ``order`` the
    exponent of the time-difference measurement (2 recovers the RBF kernel).
    Times are measured in integer plan steps.
    """

    sigma_f2: float = 1.0
    length: float = 1.0
    t0: float = 0.0
    order: float = 2.0

    def validate(self) -> None:
        if not (self.sigma_f2 > 0 and self.length > 0 and self.order > 0):
            raise ValueError(
                f"require sigma_f2 > 0, length > 0, order > 0; got "
                f"({self.sigma_f2}, {self.length}, {self.order})"
            )


def uniform_weights(horizon: int) -> WeightSchedule:
    """All-ones baseline (unweighted supervision)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return WeightSchedule(np.ones(horizon), "uniform")


def truncation_weights(t_cut: int, horizon: int) -> WeightSchedule:
    """Ones for steps < t_cut, zeros after."""
    if not (1 <= t_cut <= horizon):
        raise ValueError(f"t_cut must be in [1, {horizon}], got {t_cut}")
    w = np.zeros(horizon)
    w[:t_cut] = 1.0
    return WeightSchedule(w, "truncation", {"t_cut": t_cut})


def gp_variance(t, gp: GpParams):
    """Predictive variance at time t given an observation at gp.t0:
    sigma_f^2 * (1 - exp(-(t - t0)^2 / l^2)).  Vectorized over t."""
    gp.validate()
    t = np.asarray(t, dtype=float)
    return gp.sigma_f2 * (1.0 - np.exp(-((t - gp.t0) ** 2) / gp.length ** 2))


def gp_compensation(t, gp: GpParams):
    """Deviation from maximum uncertainty: sigma_f^2 - gp_variance(t)."""
    return gp.sigma_f2 - gp_variance(t, gp)


def decay_weights(horizon: int, gp: GpParams) -> WeightSchedule:
    """w_t proportional to exp(-(|t - t0| / l)^order), normalized to mean 1.

    t runs over integer steps 0..horizon-1.  The normalizer is the average
    unnormalized weight, so sum(weights) == horizon.
    """
    gp.validate()
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    t = np.arange(horizon, dtype=float)
    raw = np.exp(-((np.abs(t - gp.t0) / gp.length) ** gp.order))
    w = raw / raw.mean()
    return WeightSchedule(
        w, "decay", {"length": gp.length, "order": gp.order, "t0": gp.t0}
    )


def timenorm_weights(step_losses, eps_guard: float = TIMENORM_GUARD) -> WeightSchedule:
    """Inverse batch-mean weights from a (B, T) matrix of per-step losses.

    w_t = 1 / max(mean_b losses[b, t], eps_guard), so the batch mean of the
    weighted per-step loss is 1 wherever the column mean exceeds the guard.
    The weights are statistics of the batch, NOT differentiated through.
    """
    losses = np.asarray(step_losses, dtype=float)
    if losses.ndim != 2 or losses.shape[0] < 1:
        raise ValueError(f"expected (B, T) loss matrix with B >= 1, got {losses.shape}")
    if not np.isfinite(losses).all():
        raise ValueError("non-finite entry in step-loss matrix")
    if (losses < 0).any():
        raise ValueError("negative entry in step-loss matrix")
    mu = losses.mean(axis=0)
    w = 1.0 / np.maximum(mu, eps_guard)
    return WeightSchedule(w, "timenorm", {"eps_guard": eps_guard})

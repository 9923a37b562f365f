"""scopekit: horizon-scoped supervision for trajectory planners.

Decompose demonstration trajectories across time scales, weight or mask the
imitation loss by decision horizon, and measure the effect in a closed-loop
simulator with scripted surprise events.
"""

__version__ = "0.1.0"

from .core import (
    CHANNELS,
    Observation,
    Obstacle,
    PlanConfig,
    Trajectory,
    channel_matrix,
    trajectory_from_matrix,
    validate_trajectory,
)
from .losses import (
    CircleSet,
    LossBreakdown,
    ScopeComponents,
    closest_mode,
    collision_loss,
    mode_score_loss,
    scope_loss,
    smooth_l1,
    total_loss,
    weighted_regression_loss,
)
from .wavelet import (
    ScopedStack,
    WaveletPyramid,
    decompose,
    downsample_within_horizon,
    haar_forward,
    haar_inverse,
    reconstruct,
)
from .weights import (
    GpParams,
    WeightSchedule,
    decay_weights,
    gp_variance,
    timenorm_weights,
    truncation_weights,
    uniform_weights,
)

__all__ = [
    "CHANNELS",
    "CircleSet",
    "GpParams",
    "LossBreakdown",
    "Observation",
    "Obstacle",
    "PlanConfig",
    "ScopeComponents",
    "ScopedStack",
    "Trajectory",
    "WaveletPyramid",
    "WeightSchedule",
    "channel_matrix",
    "closest_mode",
    "collision_loss",
    "decay_weights",
    "decompose",
    "downsample_within_horizon",
    "gp_variance",
    "haar_forward",
    "haar_inverse",
    "mode_score_loss",
    "reconstruct",
    "scope_loss",
    "smooth_l1",
    "timenorm_weights",
    "total_loss",
    "trajectory_from_matrix",
    "truncation_weights",
    "uniform_weights",
    "validate_trajectory",
    "weighted_regression_loss",
]

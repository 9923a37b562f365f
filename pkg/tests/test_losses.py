import math

import numpy as np
import pytest

from scopekit.losses import (
    CircleSet,
    ScopeComponents,
    closest_mode,
    collision_loss,
    collision_loss_grad,
    mode_score_grad,
    mode_score_loss,
    scope_loss,
    scope_loss_grad,
    smooth_l1,
    smooth_l1_grad,
    total_loss,
    weighted_regression_grad,
    weighted_regression_loss,
)
from scopekit.wavelet import decompose, downsample_within_horizon
from scopekit.weights import truncation_weights, uniform_weights


def test_smooth_l1_values():
    pred = np.array([1.0, 1.5, 3.0])
    target = np.array([1.0, 1.0, 1.0])
    assert np.allclose(smooth_l1(pred, target), [0.0, 0.125, 1.5])


def test_smooth_l1_shape_mismatch():
    with pytest.raises(ValueError):
        smooth_l1(np.zeros(3), np.zeros(4))


def test_smooth_l1_grad_matches_fd():
    rng = np.random.default_rng(0)
    pred = rng.normal(0, 2, 40)
    target = rng.normal(0, 2, 40)
    grad = smooth_l1_grad(pred, target)
    eps = 1e-6
    for i in range(0, 40, 7):
        up, down = pred.copy(), pred.copy()
        up[i] += eps
        down[i] -= eps
        fd = (smooth_l1(up, target)[i] - smooth_l1(down, target)[i]) / (2 * eps)
        assert abs(fd - grad[i]) < 1e-6


def _traj(n, value=0.0):
    data = np.full((n, 6), value)
    data[:, 2] = 1.0
    data[:, 3] = 0.0
    return data


def test_weighted_regression_zero_on_match():
    pred = _traj(4, 1.0)
    loss, per_step = weighted_regression_loss(pred, pred, uniform_weights(4))
    assert loss == 0.0
    assert np.array_equal(per_step, np.zeros(4))


def test_weighted_regression_uniform_equals_unweighted():
    rng = np.random.default_rng(1)
    pred, target = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
    loss, per_step = weighted_regression_loss(pred, target, uniform_weights(6))
    assert abs(loss - per_step.mean()) < 1e-15


def test_weighted_regression_hand_average():
    # per-step losses all 1 (channel diff 2.0 on one channel: smooth=1.5; use
    # uniform diffs instead): make every channel differ by 2 -> step loss 1.5
    pred = _traj(4)
    target = pred.copy()
    target += 2.0
    sched = uniform_weights(4)
    sched.weights = np.array([2.0, 2.0, 0.0, 0.0])
    loss, per_step = weighted_regression_loss(pred, target, sched)
    assert np.allclose(per_step, 1.5)
    assert abs(loss - (1.5 * 2 + 1.5 * 2) / 4) < 1e-15


def test_weighted_regression_truncation_masks_tail_bitexact():
    rng = np.random.default_rng(2)
    pred = rng.normal(size=(10, 6))
    target = rng.normal(size=(10, 6))
    sched = truncation_weights(4, 10)
    base, _ = weighted_regression_loss(pred, target, sched)
    tampered = target.copy()
    tampered[4:] += rng.normal(size=(6, 6)) * 100
    after, _ = weighted_regression_loss(pred, tampered, sched)
    assert base == after  # bit-exact


def test_weighted_regression_length_mismatch():
    with pytest.raises(ValueError):
        weighted_regression_loss(_traj(4), _traj(4), uniform_weights(5))


def test_weighted_regression_grad_fd():
    rng = np.random.default_rng(3)
    pred = rng.normal(size=(5, 6))
    target = rng.normal(size=(5, 6))
    sched = uniform_weights(5)
    sched.weights = rng.uniform(0, 2, 5)
    grad = weighted_regression_grad(pred, target, sched)
    eps = 1e-6
    for idx in [(0, 0), (2, 3), (4, 5)]:
        up, down = pred.copy(), pred.copy()
        up[idx] += eps
        down[idx] -= eps
        fd = (weighted_regression_loss(up, target, sched)[0]
              - weighted_regression_loss(down, target, sched)[0]) / (2 * eps)
        assert abs(fd - grad[idx]) < 1e-8


# -- scope loss --------------------------------------------------------------


def test_scope_loss_zero_on_match():
    target = decompose(np.arange(16.0)[:, None], 2)
    pred = ScopeComponents(details=[d.copy() for d in target.details],
                           approx=target.approx.copy())
    assert scope_loss(pred, target, [8, 4]) == 0.0


def test_scope_loss_two_term_hand_value():
    target = decompose(np.zeros((4, 1)), 1)
    pred = ScopeComponents(
        details=[np.array([[1.0], [0.0]])],  # masked norm 1
        approx=np.array([[3.0], [0.0]]),  # norm 3
    )
    assert scope_loss(pred, target, [2]) == 2.0


def test_scope_loss_mask_excludes_tail():
    target = decompose(np.zeros((8, 1)), 1)
    pred = ScopeComponents(
        details=[np.array([[0.0], [0.0], [5.0], [5.0]])],
        approx=np.zeros((4, 1)),
    )
    assert scope_loss(pred, target, [2]) == 0.0


def test_scope_loss_bad_horizon():
    target = decompose(np.zeros((8, 1)), 1)
    pred = ScopeComponents(details=[np.zeros((4, 1))], approx=np.zeros((4, 1)))
    with pytest.raises(ValueError):
        scope_loss(pred, target, [5])


def test_scope_loss_stack_target():
    x = np.arange(8.0)[:, None]
    stack = downsample_within_horizon(x, 2, 2)
    pred = ScopeComponents(details=[np.zeros((8, 1)), np.zeros((4, 1))])
    expected = (np.linalg.norm(stack.levels[0]) + np.linalg.norm(stack.levels[1])) / 2
    assert abs(scope_loss(pred, stack, None) - expected) < 1e-12


def brute_scope_loss(signal, pred, levels, horizons):
    """Independent recomputation from the raw signal: loop-based analysis
    chain, python-summed norms."""
    terms = []
    approx = [list(col) for col in np.asarray(signal).T]
    details = []
    for _ in range(levels):
        new_approx, det = [], []
        for col in approx:
            a = [col[2 * i] + col[2 * i + 1] for i in range(len(col) // 2)]
            d = [col[2 * i] - col[2 * i + 1] for i in range(len(col) // 2)]
            new_approx.append(a)
            det.append(d)
        approx = new_approx
        details.append(det)
    for l, det in enumerate(details):
        h = horizons[l]
        acc = 0.0
        for c, col in enumerate(det):
            for i in range(h):
                acc += (pred.details[l][i, c] - col[i]) ** 2
        terms.append(math.sqrt(acc))
    acc = 0.0
    for c, col in enumerate(approx):
        for i in range(len(col)):
            acc += (pred.approx[i, c] - col[i]) ** 2
    terms.append(math.sqrt(acc))
    return sum(terms) / len(terms)


def test_scope_loss_matches_bruteforce_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        length = int(rng.choice([8, 16, 32]))
        levels = 2
        x = rng.uniform(-5, 5, (length, 2))
        target = decompose(x, levels)
        pred = ScopeComponents(
            details=[rng.normal(size=d.shape) for d in target.details],
            approx=rng.normal(size=target.approx.shape),
        )
        horizons = [int(rng.integers(1, d.shape[0] + 1)) for d in target.details]
        fast = scope_loss(pred, target, horizons)
        slow = brute_scope_loss(x, pred, levels, horizons)
        assert abs(fast - slow) <= 1e-9 * max(1.0, abs(slow))


def test_scope_loss_grad_fd():
    rng = np.random.default_rng(6)
    x = rng.uniform(-5, 5, (16, 2))
    target = decompose(x, 2)
    pred = ScopeComponents(
        details=[rng.normal(size=d.shape) for d in target.details],
        approx=rng.normal(size=target.approx.shape),
    )
    horizons = [6, 3]
    grad = scope_loss_grad(pred, target, horizons)
    eps = 1e-6
    for l in range(2):
        idx = (1, 0)
        up = ScopeComponents([d.copy() for d in pred.details], pred.approx.copy())
        up.details[l][idx] += eps
        down = ScopeComponents([d.copy() for d in pred.details], pred.approx.copy())
        down.details[l][idx] -= eps
        fd = (scope_loss(up, target, horizons) - scope_loss(down, target, horizons)) / (2 * eps)
        assert abs(fd - grad.details[l][idx]) < 1e-6


# -- collision ---------------------------------------------------------------


def _single_pair(dist, radius=2.0, tol=0.1, horizon=10):
    return CircleSet(
        steps=np.array([3]),
        ego=np.array([[0.0, 0.0]]),
        agent=np.array([[dist, 0.0]]),
        radius_sum=np.array([radius]),
        tolerance=np.array([tol]),
        horizon=horizon,
    )


def test_collision_far_apart_zero():
    assert collision_loss(_single_pair(50.0)) == 0.0


def test_collision_hand_value():
    # max(0, 2 + 0.1 - 1.5) / 10 = 0.06
    assert abs(collision_loss(_single_pair(1.5)) - 0.06) <= 1e-12


def test_collision_tangency_zero():
    assert collision_loss(_single_pair(2.1)) == 0.0


def test_collision_empty():
    assert collision_loss(CircleSet.empty(10)) == 0.0


def test_collision_grad_fd():
    circles = _single_pair(1.5)
    grad = collision_loss_grad(circles)
    eps = 1e-7
    for axis in range(2):
        up = _single_pair(1.5)
        up.ego[0, axis] += eps
        down = _single_pair(1.5)
        down.ego[0, axis] -= eps
        fd = (collision_loss(up) - collision_loss(down)) / (2 * eps)
        assert abs(fd - grad[0, axis]) < 1e-6


# -- mode score --------------------------------------------------------------


def test_mode_score_uniform_softmax():
    assert abs(mode_score_loss(np.zeros(6), 2) - math.log(6)) <= 1e-12


def test_mode_score_large_margin_goes_to_zero():
    scores = np.array([200.0, 0.0, 0.0])
    assert mode_score_loss(scores, 0) < 1e-12


def test_mode_score_single_mode_is_zero():
    assert mode_score_loss(np.array([3.7]), 0) == 0.0


def test_mode_score_bad_index():
    with pytest.raises(ValueError):
        mode_score_loss(np.zeros(3), 3)


def test_mode_score_grad_fd():
    rng = np.random.default_rng(8)
    scores = rng.normal(size=5)
    grad = mode_score_grad(scores, 2)
    eps = 1e-6
    for i in range(5):
        up, down = scores.copy(), scores.copy()
        up[i] += eps
        down[i] -= eps
        fd = (mode_score_loss(up, 2) - mode_score_loss(down, 2)) / (2 * eps)
        assert abs(fd - grad[i]) < 1e-9


def test_closest_mode_final_step_and_tiebreak():
    target = _traj(4)
    target[:, 0] = np.arange(4.0)
    trajs = np.stack([_traj(4), _traj(4)])
    trajs[1, :, 0] = np.arange(4.0)  # exact match
    assert closest_mode(trajs, target) == 1
    assert closest_mode(np.stack([trajs[1], trajs[1]]), target) == 0


# -- aggregation -------------------------------------------------------------


def test_total_loss_single_term():
    assert total_loss(reg=0.3).total == 0.3


def test_total_loss_sum():
    breakdown = total_loss(reg=0.3, ds=0.1, col=0.0, cls=0.05)
    assert abs(breakdown.total - 0.45) <= 1e-12
    assert breakdown.total == breakdown.reg + breakdown.cls + breakdown.col + breakdown.ds


def test_total_loss_all_zero():
    assert total_loss().total == 0.0

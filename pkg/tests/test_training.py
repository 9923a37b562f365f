import json
import math

import numpy as np
import pytest

from scopekit.core import PlanConfig
from scopekit.policy import flatten_params, param_spec, save_checkpoint
from scopekit.simulator import ScenarioConfig, expert_rollout, sample_scenario
from scopekit.training import (
    Sample,
    TrainConfig,
    TrainingAborted,
    batch_objective,
    build_dataset,
    make_schedule,
    train_run,
)

from helpers import small_train_config, sampled_instance

SCEN_CFG = ScenarioConfig()


def _episodes(n, root=100):
    return [expert_rollout(sample_scenario(root, i, SCEN_CFG), SCEN_CFG.expert)
            for i in range(n)]


def _small_dataset(n_episodes=3, stride=10, plan=None):
    plan = plan or PlanConfig()
    return build_dataset(_episodes(n_episodes), stride, plan)


def test_build_dataset_sample_count():
    # 300-step episode, stride 10, horizon 80: t in {0,10,...,210} -> 22
    plan = PlanConfig()
    ds = build_dataset(_episodes(1), 10, plan)
    assert len(ds) == 22
    assert ds[0].step == 0 and ds[-1].step == 210


def test_build_dataset_stride_episode_length():
    ds = build_dataset(_episodes(1), 300, PlanConfig())
    assert len(ds) == 1


def test_build_dataset_duplicate_episodes_double():
    eps = _episodes(1)
    ds1 = build_dataset(eps, 10, PlanConfig())
    ds2 = build_dataset(eps + eps, 10, PlanConfig())
    assert len(ds2) == 2 * len(ds1)


def test_build_dataset_empty_input():
    with pytest.raises(ValueError):
        build_dataset([], 10, PlanConfig())


def test_build_dataset_rejects_non_expert():
    log = _episodes(1)[0]
    log.kind = "closed-loop"
    with pytest.raises(ValueError):
        build_dataset([log], 10, PlanConfig())


def test_dataset_targets_start_near_origin():
    ds = _small_dataset(1)
    for s in ds:
        assert abs(s.target[0, 0]) < 2.0  # lane frame anchored at the ego


# -- config ------------------------------------------------------------------


def test_config_exclusive_weight_schemes():
    with pytest.raises(ValueError, match="exclusive"):
        TrainConfig.from_dict({
            "weights": {"timenorm": {}, "truncation": {"steps": 20}},
        })


def test_config_round_trip():
    cfg = TrainConfig.from_dict({
        "seed": 3,
        "weights": {"decay": {"length": 2.0, "order": 1.5}},
        "detail": {"structure": "multihead", "decomposition": "dwh", "horizon": 12},
        "train": {"epochs": 2, "batch_size": 8},
    })
    again = TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_config_unknown_scheme():
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"weights": {"bogus": {}}})


def test_config_detail_requires_both_fields():
    cfg = TrainConfig(detail_structure="multihead", decomposition="none")
    with pytest.raises(ValueError):
        cfg.validate()


def test_detail_horizons_follow_halving():
    cfg = TrainConfig(plan=PlanConfig(future_steps=80, wavelet_levels=3,
                                      ds_horizon=10))
    assert cfg.detail_horizons() == [10, 5, 2]


def test_make_schedule_kinds():
    cfg = TrainConfig(plan=PlanConfig())
    assert make_schedule(cfg).scheme == "uniform"
    cfg.weight_scheme = "truncation"
    assert make_schedule(cfg).scheme == "truncation"
    cfg.weight_scheme = "decay"
    assert make_schedule(cfg).scheme == "decay"
    cfg.weight_scheme = "timenorm"
    assert make_schedule(cfg) is None


# -- objective ---------------------------------------------------------------


def test_objective_timenorm_weights_from_this_batch_only():
    rng = np.random.default_rng(0)
    cfg = small_train_config("timenorm")
    pcfg, params, batch = sampled_instance(cfg, rng, batch_size=4)
    _, _, sched_a = batch_objective(params, pcfg, batch, cfg)
    _, _, sched_b = batch_objective(params, pcfg, list(reversed(batch)), cfg)
    # permuting the batch leaves the column means (hence weights) unchanged
    assert np.abs(sched_a.weights - sched_b.weights).max() < 1e-12
    other = [batch[0]] * 4
    _, _, sched_c = batch_objective(params, pcfg, other, cfg)
    assert not np.array_equal(sched_a.weights, sched_c.weights)


def test_objective_breakdown_totals():
    rng = np.random.default_rng(1)
    cfg = small_train_config("uniform", "multihead", "dwt")
    pcfg, params, batch = sampled_instance(cfg, rng, batch_size=2)
    breakdown, grads, _ = batch_objective(params, pcfg, batch, cfg)
    assert abs(breakdown.total
               - (breakdown.reg + breakdown.cls + breakdown.col + breakdown.ds)) < 1e-12
    assert breakdown.ds > 0
    assert set(grads) == {name for name, _ in param_spec(pcfg)}


# -- training loop -------------------------------------------------------------


def _tiny_train_config(**kwargs):
    plan = PlanConfig()
    defaults = dict(plan=plan, hidden_width=8, batch_size=8, epochs=2,
                    warmup_epochs=1, stride=30, seed=0)
    defaults.update(kwargs)
    return TrainConfig(**defaults)


def test_zero_learning_rate_leaves_params():
    ds = _small_dataset(2)
    cfg = _tiny_train_config(learning_rate=0.0)
    res = train_run(cfg, ds)
    from scopekit.policy import init_params

    fresh = init_params(res.policy_config, np.random.default_rng(cfg.seed))
    for name, value in res.params.items():
        assert np.array_equal(value, fresh[name])


def test_training_deterministic():
    ds = _small_dataset(2)
    cfg = _tiny_train_config()
    a = train_run(cfg, ds)
    b = train_run(cfg, ds)
    assert np.array_equal(flatten_params(a.params, a.policy_config),
                          flatten_params(b.params, b.policy_config))
    assert a.log_rows == b.log_rows


def test_training_loss_decreases():
    ds = build_dataset(_episodes(20), 10, PlanConfig())
    cfg = _tiny_train_config(epochs=8, batch_size=32, stride=10)
    res = train_run(cfg, ds)
    per_epoch = len(res.log_rows) // cfg.epochs
    first = np.mean([r[1] for r in res.log_rows[:per_epoch]])
    last = np.mean([r[1] for r in res.log_rows[-per_epoch:]])
    assert last < first


def test_training_rejects_oversized_batch():
    ds = _small_dataset(1, stride=100)
    with pytest.raises(ValueError, match="batch_size"):
        train_run(_tiny_train_config(batch_size=64), ds)


def test_training_rejects_empty_dataset():
    with pytest.raises(ValueError):
        train_run(_tiny_train_config(), [])


def test_training_aborts_on_nonfinite_target():
    ds = _small_dataset(2)
    ds[3].target = ds[3].target.copy()
    ds[3].target[5, 0] = float("nan")
    with pytest.raises(TrainingAborted) as info:
        train_run(_tiny_train_config(), ds)
    assert info.value.params is not None


def test_truncation_training_bit_invariant_to_tail_perturbation(tmp_path):
    """Perturbing expert targets beyond the cut changes nothing: neither the
    losses nor the final checkpoint bytes."""
    plan = PlanConfig()
    ds = build_dataset(_episodes(2), 30, plan)
    t_cut = 20
    perturbed = []
    rng = np.random.default_rng(5)
    for s in ds:
        target = s.target.copy()
        target[t_cut:] += rng.normal(0, 10.0, target[t_cut:].shape)
        perturbed.append(Sample(s.features, target, s.obstacles,
                                s.episode_index, s.step))
    cfg = _tiny_train_config(weight_scheme="truncation", truncation_steps=t_cut,
                             epochs=2)
    res_a = train_run(cfg, ds)
    res_b = train_run(cfg, perturbed)
    a_path, b_path = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(a_path, res_a.params, res_a.policy_config, cfg.seed, res_a.steps)
    save_checkpoint(b_path, res_b.params, res_b.policy_config, cfg.seed, res_b.steps)
    assert a_path.read_bytes() == b_path.read_bytes()
    assert res_a.log_rows == res_b.log_rows


def test_warmup_scales_first_steps():
    ds = _small_dataset(2)
    cfg = _tiny_train_config(epochs=1, warmup_epochs=2, learning_rate=1e-3)
    res = train_run(cfg, ds)
    # with warmup longer than the run, every step used a scaled rate; the
    # parameters moved but by less than the unscaled run
    cfg_fast = _tiny_train_config(epochs=1, warmup_epochs=0, learning_rate=1e-3)
    res_fast = train_run(cfg_fast, ds)
    from scopekit.policy import init_params

    base = flatten_params(init_params(res.policy_config,
                                      np.random.default_rng(cfg.seed)),
                          res.policy_config)
    moved = np.abs(flatten_params(res.params, res.policy_config) - base).sum()
    moved_fast = np.abs(flatten_params(res_fast.params, res_fast.policy_config)
                        - base).sum()
    assert 0 < moved < moved_fast

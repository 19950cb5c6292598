"""Trainer: loss identities, optimizer behavior, staged training, determinism."""

import numpy as np
import pytest

from protocast.errors import ConfigError, TrainingDiverged
from protocast.prototypes import edit_pattern
from protocast.tensor import Tensor
from protocast.trainer import (
    Adam,
    StagePlanEntry,
    TrainConfig,
    WindowSet,
    loss,
    staged_train,
    train_stage,
    validation_mae,
)

from helpers import tiny_dataset, tiny_model


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def test_loss_zero_when_perfect_and_unregularized():
    pred = Tensor([1.0, 2.0, 3.0])
    weights = Tensor([0.5, 0.5])
    assert loss(pred, pred, weights, entropy_weight=0.0).item() == 0.0


def test_loss_uniform_weights_equal_log_n():
    pred = Tensor([1.0, 2.0])
    weights = Tensor([0.25] * 4)
    value = loss(pred, pred, weights, entropy_weight=1.0).item()
    assert abs(value - np.log(4.0)) <= 1e-9


def test_loss_one_hot_weights_near_zero():
    pred = Tensor([1.0])
    weights = Tensor([1.0, 0.0, 0.0])
    assert abs(loss(pred, pred, weights, entropy_weight=3.0).item()) < 1e-9


def test_loss_lambda_zero_is_pure_l1():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=5), rng.normal(size=5)
    value = loss(Tensor(a), Tensor(b), Tensor([0.3, 0.7]), entropy_weight=0.0).item()
    assert abs(value - np.abs(a - b).sum()) <= 1e-12


def test_loss_l2_kind():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=5), rng.normal(size=5)
    value = loss(Tensor(a), Tensor(b), Tensor([1.0]), entropy_weight=0.0, loss_kind="l2").item()
    assert abs(value - ((a - b) ** 2).sum()) <= 1e-12


def test_loss_strictly_increasing_in_entropy():
    pred = Tensor([0.0, 0.0])
    flat = Tensor([0.25] * 4)
    mid = Tensor([0.4, 0.3, 0.2, 0.1])
    peaked = Tensor([0.97, 0.01, 0.01, 0.01])
    values = [loss(pred, pred, w, entropy_weight=0.5).item() for w in (peaked, mid, flat)]
    assert values[0] < values[1] < values[2]


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ConfigError):
        TrainConfig(patience=0)
    with pytest.raises(ConfigError):
        TrainConfig(entropy_weight=-0.1)
    with pytest.raises(ConfigError):
        TrainConfig(loss_kind="huber")


def test_config_json_round_trip():
    cfg = TrainConfig(lr=0.01, stage_plan=(StagePlanEntry(m=3, k=2, alpha=25.0),))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------------------
# optimization mechanics
# ---------------------------------------------------------------------------

def test_lr_zero_leaves_parameters_unchanged():
    _, schema, norm, windows, _ = tiny_dataset(seed=3, periods=12)
    model = tiny_model(schema, norm)
    before = model.snapshot()
    train_stage(model, WindowSet(train=windows.train[:8], val=windows.val), TrainConfig(lr=0.0, max_epochs=3))
    after = model.snapshot()
    for name in before:
        assert np.array_equal(before[name], after[name]), name


def test_adam_moves_parameters_against_gradient():
    p = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam({"p": p}, lr=0.1)
    p.grad = np.array([1.0, -1.0, 0.5])
    opt.step()
    assert p.data[0] < 0 < p.data[1]


def test_single_instance_single_prototype_converges():
    # convex in the pattern: the lone prototype carries weight exactly 1
    _, schema, norm, windows, _ = tiny_dataset(seed=4, periods=12)
    model = tiny_model(schema, norm, n_roots=1, n_blocks=0)
    train = [windows.train[0]]
    config = TrainConfig(lr=5e-3, max_epochs=2000, batch_size=1, entropy_weight=0.0)
    records, _ = train_stage(model, WindowSet(train=train), config)
    assert records[-1].train_loss < 1e-3


def test_fixed_seed_reproduces_loss_sequence_and_parameters():
    _, schema, norm, windows, _ = tiny_dataset(seed=5, periods=16)
    results = []
    for _ in range(2):
        model = tiny_model(schema, norm, seed=9)
        config = TrainConfig(lr=1e-2, max_epochs=4, seed=9)
        records, _ = train_stage(model, windows, config)
        results.append(([r.train_loss for r in records], model.snapshot()))
    assert results[0][0] == results[1][0]
    for name in results[0][1]:
        assert np.array_equal(results[0][1][name], results[1][1][name]), name


def test_nan_loss_aborts_with_diagnostics():
    _, schema, norm, windows, _ = tiny_dataset(seed=6, periods=12)
    model = tiny_model(schema, norm)
    model.encoder.w_agg.data[0, 0] = np.nan
    with pytest.raises(TrainingDiverged, match="batch"):
        train_stage(model, windows, TrainConfig(lr=1e-3, max_epochs=1))


def test_early_stopping_restores_best_validation_state():
    _, schema, norm, windows, _ = tiny_dataset(seed=7, periods=20)
    model = tiny_model(schema, norm)
    config = TrainConfig(lr=5e-2, max_epochs=12, patience=2, seed=1)
    records, best_val = train_stage(model, windows, config)
    assert best_val <= min(r.val_mae for r in records) + 1e-12
    assert abs(validation_mae(model, windows.val) - best_val) < 1e-12


# ---------------------------------------------------------------------------
# staged training
# ---------------------------------------------------------------------------

def test_staged_train_without_plan_equals_train_stage():
    _, schema, norm, windows, _ = tiny_dataset(seed=8, periods=16)
    model_a = tiny_model(schema, norm, seed=2)
    model_b = tiny_model(schema, norm, seed=2)
    config = TrainConfig(lr=1e-2, max_epochs=3, seed=2)
    report = staged_train(model_a, windows, config)
    records, _ = train_stage(model_b, windows, config)
    assert [r.train_loss for r in report.epochs] == [r.train_loss for r in records]
    assert report.split_events == []
    assert len(report.stage_boundaries) == 1


def test_staged_train_split_all_roots_doubles_leaves_once():
    _, schema, norm, windows, _ = tiny_dataset(seed=9, periods=16)
    model = tiny_model(schema, norm, n_roots=3)
    config = TrainConfig(
        lr=1e-2, max_epochs=2, seed=3, stage_plan=(StagePlanEntry(m=2, k=1, alpha=100.0),)
    )
    report = staged_train(model, windows, config)
    assert len(model.tree.leaves()) == 6
    assert len(report.split_events) == 1
    assert sorted(report.split_events[0].leaf_ids) == [0, 1, 2]
    assert model.tree.depth == 2


def test_staged_train_validation_never_regresses_across_stages():
    _, schema, norm, windows, _ = tiny_dataset(seed=10, periods=24)
    model = tiny_model(schema, norm)
    config = TrainConfig(
        lr=2e-2, max_epochs=5, patience=3, seed=4, stage_plan=(StagePlanEntry(m=2, k=1, alpha=50.0),)
    )
    report = staged_train(model, windows, config)
    assert len(report.stage_val_mae) == 2
    assert report.stage_val_mae[1] <= report.stage_val_mae[0] + 1e-6


def test_staged_train_accepts_expert_leaf_sets():
    _, schema, norm, windows, _ = tiny_dataset(seed=11, periods=16)
    model = tiny_model(schema, norm, n_roots=2)
    config = TrainConfig(
        lr=1e-2, max_epochs=2, seed=5, stage_plan=(StagePlanEntry(m=3, leaf_ids=(1,)),)
    )
    staged_train(model, windows, config)
    assert model.tree.nodes[0].is_leaf
    assert len(model.tree.nodes[1].children) == 3


def test_locked_pattern_survives_training_bit_for_bit():
    _, schema, norm, windows, _ = tiny_dataset(seed=12, periods=16)
    model = tiny_model(schema, norm, n_roots=2)
    fixed = np.linspace(-1.0, 1.0, schema.period_T)
    model.tree = edit_pattern(model.tree, 0, fixed, lock=True)
    free_before = model.tree.nodes[1].pattern.data.copy()
    train_stage(model, windows, TrainConfig(lr=5e-2, max_epochs=3, seed=6))
    assert np.array_equal(model.tree.nodes[0].pattern.data, fixed)
    assert not np.array_equal(model.tree.nodes[1].pattern.data, free_before)

import csv
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcsknet.errors import ConfigError, OptimizerError, TrainingAborted
from tcsknet.features.mfcc import FeatureMap
from tcsknet.model.network import TcskNet, TcskNetConfig, tcsknet_forward
from tcsknet.numerics import Tensor, new_rng
from tcsknet.train import (AdamState, TrainConfig, adam_step, evaluate, lr_at,
                           train)

TINY = TcskNetConfig(in_channels=3, c_channels=6, l_size=5, p_size=3,
                     dropout=0.0, n_classes=3)


def toy_example(label, seed, t=16):
    """Class k puts energy on channel k; trivially separable."""
    rng = new_rng(seed, label)
    x = 0.1 * rng.standard_normal((3, t)).astype(np.float32)
    x[label] += 1.0
    return FeatureMap(x), label


def toy_split(n_per_class, seed0):
    return [toy_example(k, seed0 + i) for i in range(n_per_class)
            for k in range(3)]


# ---------------------------------------------------------- schedule

def test_lr_schedule_reference_values():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == 0.001
    assert lr_at(4, cfg) == 0.001
    assert lr_at(5, cfg) == pytest.approx(0.00098, rel=1e-12)
    assert lr_at(9, cfg) == pytest.approx(0.00098, rel=1e-12)
    assert lr_at(10, cfg) == pytest.approx(0.0009604, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 500))
def test_lr_schedule_is_stepped_and_non_increasing(epoch):
    cfg = TrainConfig()
    here = lr_at(epoch, cfg)
    assert here == cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_interval)
    assert lr_at(epoch + 1, cfg) <= here
    if (epoch + 1) % cfg.decay_interval:
        assert lr_at(epoch + 1, cfg) == here


def test_lr_at_rejects_negative_epoch():
    with pytest.raises(ConfigError, match="epoch"):
        lr_at(-1, TrainConfig())


def test_train_config_validation():
    for kw in ({"lr0": 0.0}, {"decay_factor": 0.0}, {"decay_factor": 1.5},
               {"decay_interval": 0}, {"batch_size": 0}, {"epochs": 0},
               {"weight_decay": -0.1}):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


# -------------------------------------------------------------- adam

def params_of(values):
    return {name: Tensor(np.asarray(v, dtype=np.float32), requires_grad=True)
            for name, v in values.items()}


def test_adam_zero_grad_zero_decay_is_identity():
    p = params_of({"w": [1.0, -2.0, 3.0]})
    p["w"].grad = np.zeros(3, dtype=np.float32)
    before = p["w"].data.copy()
    adam_step(p, AdamState(p), lr=0.01, weight_decay=0.0)
    np.testing.assert_array_equal(p["w"].data, before)


def test_adam_missing_grad_counts_as_zero():
    p = params_of({"w": [2.0]})
    adam_step(p, AdamState(p), lr=0.1, weight_decay=0.0)
    assert float(p["w"].data[0]) == 2.0


def test_adam_decoupled_decay_shrinks_by_lr_wd():
    p = params_of({"w": [10.0, -4.0]})
    p["w"].grad = np.zeros(2, dtype=np.float32)
    adam_step(p, AdamState(p), lr=0.1, weight_decay=0.5)
    np.testing.assert_allclose(p["w"].data, [10.0 * 0.95, -4.0 * 0.95], rtol=1e-6)


def test_adam_first_step_magnitude_is_lr():
    # with bias correction the first update is lr * g / (|g| + eps)
    p = params_of({"w": [1.0, 1.0]})
    p["w"].grad = np.array([0.3, -7.0], dtype=np.float32)
    adam_step(p, AdamState(p), lr=0.01, weight_decay=0.0)
    np.testing.assert_allclose(p["w"].data, [1.0 - 0.01, 1.0 + 0.01], rtol=1e-4)


def test_adam_l2_and_decoupled_modes_differ():
    def run(decoupled):
        p = params_of({"w": [2.0]})
        state = AdamState(p)
        for _ in range(3):
            p["w"].grad = np.array([0.5], dtype=np.float32)
            adam_step(p, state, lr=0.01, weight_decay=0.1, decoupled=decoupled)
        return float(p["w"].data[0])

    assert run(True) != run(False)


def test_adam_nan_gradient_aborts_without_touching_weights():
    p = params_of({"w_good": [1.0], "w_bad": [2.0]})
    p["w_good"].grad = np.array([0.1], dtype=np.float32)
    p["w_bad"].grad = np.array([np.nan], dtype=np.float32)
    state = AdamState(p)
    with pytest.raises(OptimizerError, match="w_bad"):
        adam_step(p, state, lr=0.01, weight_decay=0.0)
    assert float(p["w_good"].data[0]) == 1.0
    assert state.step == 0


def test_adam_rejects_nonpositive_lr():
    p = params_of({"w": [1.0]})
    with pytest.raises(OptimizerError, match="lr"):
        adam_step(p, AdamState(p), lr=0.0, weight_decay=0.0)


def test_adam_returns_scalar_count():
    p = params_of({"a": np.zeros((3, 4)), "b": np.zeros(5)})
    assert adam_step(p, AdamState(p), lr=0.01, weight_decay=0.0) == 17


def test_adam_descends_a_quadratic():
    p = params_of({"w": [5.0]})
    state = AdamState(p)
    for _ in range(200):
        p["w"].grad = 2.0 * p["w"].data  # d/dw of w^2
        adam_step(p, state, lr=0.05, weight_decay=0.0)
    assert abs(float(p["w"].data[0])) < 0.5


# ------------------------------------------------------------- train

def test_train_loss_decreases_on_separable_toy_data():
    net = TcskNet(TINY, rng=new_rng(120, 0))
    cfg = TrainConfig(lr0=0.01, epochs=15, batch_size=4, seed=1,
                      weight_decay=0.0)
    report = train(net, toy_split(4, 200), toy_split(2, 300), cfg)
    assert len(report.rows) == 15
    assert report.rows[-1].train_loss < 0.5 * report.rows[0].train_loss
    assert report.best_acc >= 0.8


def test_train_is_bitwise_deterministic():
    def run():
        net = TcskNet(TINY, rng=new_rng(121, 0))
        cfg = TrainConfig(epochs=3, batch_size=4, seed=5)
        report = train(net, toy_split(3, 210), toy_split(2, 310), cfg)
        return net, report

    net_a, rep_a = run()
    net_b, rep_b = run()
    for name, p in net_a.named_parameters():
        assert np.array_equal(p.data, dict(net_b.named_parameters())[name].data), name
    for ra, rb in zip(rep_a.rows, rep_b.rows):
        assert (ra.epoch, ra.lr, ra.train_loss, ra.val_acc) \
            == (rb.epoch, rb.lr, rb.train_loss, rb.val_acc)


def test_train_step_count_matches_batching(monkeypatch):
    calls = []

    def counting(params, state, lr, weight_decay, decoupled=True):
        calls.append(lr)
        return adam_step(params, state, lr, weight_decay, decoupled)

    monkeypatch.setattr(sys.modules["tcsknet.train"], "adam_step", counting)
    net = TcskNet(TINY, rng=new_rng(122, 0))
    cfg = TrainConfig(epochs=1, batch_size=2, seed=2)
    train(net, toy_split(2, 220)[:4], toy_split(1, 320), cfg)
    assert len(calls) == 2  # 4 examples / batch 2
    assert all(lr == 0.001 for lr in calls)


def test_train_report_lr_column_follows_schedule():
    net = TcskNet(TINY, rng=new_rng(123, 0))
    cfg = TrainConfig(epochs=6, batch_size=4, seed=3)
    report = train(net, toy_split(2, 230), toy_split(1, 330), cfg)
    assert [r.lr for r in report.rows[:5]] == [0.001] * 5
    assert report.rows[5].lr == pytest.approx(0.00098, rel=1e-12)


def test_train_best_epoch_is_first_at_best_accuracy():
    net = TcskNet(TINY, rng=new_rng(124, 0))
    cfg = TrainConfig(epochs=8, batch_size=4, seed=4)
    report = train(net, toy_split(4, 240), toy_split(2, 340), cfg)
    accs = [r.val_acc for r in report.rows]
    assert report.best_acc == max(accs)
    assert report.best_epoch == accs.index(max(accs))


def test_train_aborts_on_nonfinite_loss():
    net = TcskNet(TINY, rng=new_rng(125, 0))
    bad = [(FeatureMap(np.full((3, 16), np.inf, dtype=np.float32)), 0),
           toy_example(1, 250)]
    with np.errstate(all="ignore"):
        with pytest.raises(TrainingAborted, match="epoch 0, batch 0"):
            train(net, bad, toy_split(1, 350),
                  TrainConfig(epochs=1, batch_size=2, seed=6))


def test_train_validates_splits_and_labels():
    net = TcskNet(TINY, rng=new_rng(126, 0))
    cfg = TrainConfig(epochs=1)
    with pytest.raises(ConfigError, match="nonempty"):
        train(net, [], toy_split(1, 360), cfg)
    with pytest.raises(ConfigError, match="label 7"):
        train(net, [(toy_example(0, 260)[0], 7)], toy_split(1, 360), cfg)


def test_train_writes_checkpoint_and_report(tmp_path):
    from tcsknet.model.checkpoint import load_checkpoint
    net = TcskNet(TINY, rng=new_rng(127, 0))
    cfg = TrainConfig(epochs=2, batch_size=4, seed=7)
    ckpt = tmp_path / "best.tskn"
    csv_path = tmp_path / "report.csv"
    report = train(net, toy_split(3, 270), toy_split(2, 370), cfg,
                   checkpoint_path=ckpt, report_path=csv_path,
                   extra={"note": "toy"})
    loaded_net, norm, extra = load_checkpoint(ckpt)
    assert extra["note"] == "toy"
    assert norm is None
    assert loaded_net.config == TINY

    with open(csv_path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["epoch", "lr", "train_loss", "val_acc", "seconds"]
    assert len(rows) == 1 + len(report.rows)
    assert rows[1][0] == "0" and rows[1][1] == "0.001"
    float(rows[1][4])  # seconds parses


# ---------------------------------------------------------- evaluate

def warmed_net(seed=128):
    net = TcskNet(TINY, rng=new_rng(seed, 0))
    x = new_rng(seed, 1).standard_normal((4, 3, 16)).astype(np.float32)
    tcsknet_forward(x, net, mode="train")  # populate BN running stats
    return net


def test_evaluate_confusion_rows_sum_to_class_counts():
    net = warmed_net()
    examples = toy_split(4, 280)
    acc, confusion = evaluate(net, examples)
    assert confusion.shape == (3, 3) and confusion.dtype == np.int64
    np.testing.assert_array_equal(confusion.sum(axis=1), [4, 4, 4])
    assert acc == pytest.approx(np.trace(confusion) / confusion.sum())


def test_evaluate_all_zero_net_predicts_class_zero():
    net = warmed_net()
    for _, p in net.named_parameters():
        p.data[:] = 0.0
    for blk in (net.block1, net.block2):
        for bn in (blk.bn3, blk.bn5):
            bn.state.running_mean[:] = 0.0
            bn.state.running_var[:] = 1.0
    _, confusion = evaluate(net, toy_split(2, 290))
    np.testing.assert_array_equal(confusion.sum(axis=0), [6, 0, 0])


def test_evaluate_is_repeatable_and_stateless():
    net = warmed_net()
    examples = toy_split(2, 295)
    acc1, c1 = evaluate(net, examples)
    acc2, c2 = evaluate(net, examples)
    assert acc1 == acc2
    np.testing.assert_array_equal(c1, c2)


def test_evaluate_rejects_empty_split():
    with pytest.raises(ConfigError, match="empty"):
        evaluate(warmed_net(), [])


def test_evaluate_handles_variable_lengths():
    net = warmed_net()
    examples = [(FeatureMap(new_rng(129, t).standard_normal((3, t)).astype(np.float32)), 0)
                for t in (16, 24, 40)]
    acc, confusion = evaluate(net, examples)
    assert confusion.sum() == 3

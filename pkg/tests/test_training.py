import math

import numpy as np
import pytest

from neuropathnet import tensor as tn
from neuropathnet.errors import ConfigError, ContractError, NumericError
from neuropathnet.model import ModelConfig, NeuroPathNet
from neuropathnet.tensor import Tensor
from neuropathnet.training import (
    SGD,
    Adam,
    Dataset,
    FoldResult,
    Momentum,
    TrainConfig,
    clip_gradients,
    cross_entropy,
    fit,
    run_cv,
    stratified_kfold,
)

TINY = ModelConfig(d=8, heads=2, layers=1, fusion_layers=1, dropout=0.0)


def _toy_dataset(n_per_class=4, n_paths=3, t=4, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat([0, 1], n_per_class)
    paths = rng.uniform(-0.2, 0.2, (labels.size, n_paths, t))
    paths[labels == 1, 0] += 0.6
    ids = [f"s{i:02d}" for i in range(labels.size)]
    return Dataset(ids, labels, paths)


def test_cross_entropy_values():
    uniform = Tensor(np.full((1, 3), 1 / 3))
    assert cross_entropy(uniform, [1]).item() == pytest.approx(math.log(3), abs=1e-15)
    assert cross_entropy(Tensor([[0.7, 0.3]]), [1]).item() == pytest.approx(-math.log(0.3), abs=1e-15)
    assert cross_entropy(Tensor([[0.7, 0.3]]), [1]).item() == pytest.approx(1.20397, abs=1e-5)
    with pytest.raises(ContractError):
        cross_entropy(uniform, [3])


def test_cross_entropy_gradient_on_logits_is_p_minus_y():
    logits = Tensor(np.array([[0.2, -1.0, 0.5], [1.0, 0.0, 0.0]]), requires_grad=True)
    probs = tn.softmax(logits)
    cross_entropy(probs, [2, 0]).backward()
    y = np.array([[0, 0, 1], [1, 0, 0]])
    np.testing.assert_allclose(logits.grad, (probs.data - y) / 2, atol=1e-15)


def test_stratified_kfold_examples():
    labels = [0] * 6 + [1] * 4
    split = stratified_kfold([f"s{i}" for i in range(10)], labels, 2, seed=0)
    assert len(split) == 2
    for test in split.test:
        assert sorted(int(s[1:]) < 6 for s in test).count(True) == 3
    labels = [0] * 479 + [1] * 466
    split = stratified_kfold([str(i) for i in range(945)], labels, 5, seed=3)
    assert sorted(len(t) for t in split.test) == [189] * 5
    for train, test in zip(split.train, split.test):
        assert not set(train) & set(test)
        assert len(train) + len(test) == 945
    assert sorted(s for t in split.test for s in t) == sorted(str(i) for i in range(945))


def test_kfold_class_counts_per_fold_differ_by_at_most_one():
    labels = np.array([0] * 13 + [1] * 7 + [2] * 5)
    split = stratified_kfold([str(i) for i in range(25)], labels, 5, 1)
    for c in range(3):
        counts = [sum(labels[int(s)] == c for s in t) for t in split.test]
        assert max(counts) - min(counts) <= 1


def test_kfold_needs_enough_subjects_per_class():
    with pytest.raises(ConfigError):
        stratified_kfold(["a", "b", "c"], [0, 0, 1], 2)


def test_sgd_and_momentum_follow_their_recurrences():
    p = {"w": Tensor(np.array([1.0, -2.0]))}
    grads = [np.array([0.5, 1.0]), np.array([-1.0, 0.25]), np.array([2.0, 2.0])]
    opt = SGD(0.1)
    expected = np.array([1.0, -2.0])
    for g in grads:
        opt.step(p, {"w": g})
        expected = expected - 0.1 * g
        np.testing.assert_allclose(p["w"].data, expected, atol=1e-15)
    p = {"w": Tensor(np.array([1.0, -2.0]))}
    opt = Momentum(0.1, 0.9)
    v, expected = np.zeros(2), np.array([1.0, -2.0])
    for g in grads:
        opt.step(p, {"w": g})
        v = 0.9 * v + g
        expected = expected - 0.1 * v
        np.testing.assert_allclose(p["w"].data, expected, atol=1e-15)


def test_adam_first_step_is_lr_times_sign():
    p = {"w": Tensor(np.array([0.0, 0.0]))}
    Adam(0.01).step(p, {"w": np.array([3.0, -0.5])})
    np.testing.assert_allclose(p["w"].data, [-0.01, 0.01], rtol=1e-6)


def test_clip_gradients():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_gradients(g, 1.0) == 5.0
    np.testing.assert_allclose(np.hypot(g["a"], g["b"]), 1.0)
    g = {"a": np.array([0.3])}
    clip_gradients(g, 1.0)
    assert g["a"][0] == 0.3


@pytest.mark.parametrize("optimizer", ["sgd", "sgd_momentum", "adaptive"])
def test_zero_learning_rate_leaves_parameters_unchanged(optimizer):
    data = _toy_dataset()
    model = NeuroPathNet(TINY, seed=0)
    before = model.snapshot()
    fit(model, data, TrainConfig(learning_rate=0.0, epochs=2, batch_size=4, optimizer=optimizer))
    for k, v in before.items():
        assert model.params[k].data.tobytes() == v.tobytes()


def test_overfits_eight_subjects():
    data = _toy_dataset()
    model = NeuroPathNet(TINY, seed=1)
    res = fit(model, data, TrainConfig(epochs=60, batch_size=8, learning_rate=1e-2))
    assert res.losses[-1] < 0.05 < res.losses[0]
    assert (model.predict_proba(data.paths).argmax(1) == data.labels).all()


def test_leakage_guard():
    data = _toy_dataset()
    with pytest.raises(ContractError, match="leaked"):
        fit(NeuroPathNet(TINY), data, TrainConfig(epochs=1, batch_size=4), forbidden={"s03"})


def test_nan_loss_aborts_with_advice():
    data = _toy_dataset()
    model = NeuroPathNet(TINY, seed=0)
    model.params["cls.w"].data[0, 0] = np.nan
    with pytest.raises(NumericError, match="learning_rate"):
        fit(model, data, TrainConfig(epochs=1, batch_size=4))


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="lbfgs")
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"lr": 0.1})
    with pytest.raises(ConfigError):
        TrainConfig(folds=1)


def test_cv_is_bit_reproducible_and_has_fold_rows():
    data = _toy_dataset(n_per_class=5)
    cfg = TrainConfig(epochs=2, batch_size=4, folds=5)
    a, b = run_cv(data, TINY, cfg), run_cv(data, TINY, cfg)
    assert a.table() == b.table()
    table = a.table()
    assert [r[0] for r in table[1:]] == ["0", "1", "2", "3", "4", "mean", "std"]
    for fa, fb in zip(a.folds, b.folds):
        assert fa.test_probs.tobytes() == fb.test_probs.tobytes()
        assert not set(fa.test_ids) & fa.seen_ids


def test_early_stopping_restores_best_epoch():
    data = _toy_dataset(n_per_class=6)
    val = _toy_dataset(n_per_class=3, seed=5)
    model = NeuroPathNet(TINY, seed=2)
    res = fit(model, data, TrainConfig(epochs=30, batch_size=4, patience=2, min_delta=1e9), val=val)
    assert len(res.val_losses) == 3  # first epoch sets the best, two stale epochs stop it
    assert isinstance(res, FoldResult)


def test_shuffled_labels_keep_balance():
    data = _toy_dataset(n_per_class=10)
    s = data.shuffled_labels(0)
    assert np.bincount(s.labels).tolist() == [10, 10]
    assert s.ids == data.ids

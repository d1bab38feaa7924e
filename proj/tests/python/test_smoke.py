"""Smoke tests for the python module: bindings over dataset synthesis,
training, oracle evaluation, checkpoints, and the gradient check."""

import math

import numpy as np
import pytest

import oens


def test_version_is_exposed():
    assert oens.__version__ == "0.1.0"


def test_dataset_generation_is_deterministic():
    a = oens.gen_ambiguous(seed=7, n=200, input_dim=3, mode_priors=[0.5, 0.5])
    b = oens.gen_ambiguous(seed=7, n=200, input_dim=3, mode_priors=[0.5, 0.5])
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.labels, b.labels)
    assert a.inputs.shape == (200, 3)
    assert a.class_count == 2
    assert len(a) == 200


def test_clustered_generator_balances_labels():
    ds = oens.gen_clustered_classes(
        seed=3, n=100, input_dim=2, class_count=4, cluster_spread=0.4,
        confusable_pairs=[(0, 1)], pair_separation=0.05,
    )
    counts = np.bincount(ds.labels, minlength=4)
    assert counts.max() - counts.min() <= 1


def test_oracle_loss_matches_numpy():
    rng = np.random.default_rng(0)
    losses = rng.uniform(0.0, 5.0, size=(50, 4))
    assert oens.oracle_loss(losses) == pytest.approx(losses.min(axis=1).mean(), abs=1e-12)


def test_assign_winners_matches_numpy_argmin():
    rng = np.random.default_rng(1)
    losses = rng.uniform(0.0, 5.0, size=(30, 3))
    winners = oens.assign_winners(losses, k=1)
    assert winners.shape == (30, 3)
    assert np.array_equal(winners.argmax(axis=1), losses.argmin(axis=1))
    assert np.all(winners.sum(axis=1) == 1)


def test_training_splits_an_ambiguous_task():
    train = oens.gen_ambiguous(seed=11, n=1500, input_dim=2, mode_priors=[0.5, 0.5])
    test = oens.gen_ambiguous(seed=12, n=800, input_dim=2, mode_priors=[0.5, 0.5],
                              split_tag="test")
    ensemble, history = oens.train(
        "smcl", train, train, members=2, k=1, iterations=600, batch_size=64,
        hidden=[8], learning_rate=0.1, momentum=0.9, seed=4, log_interval=200,
    )
    assert ensemble.member_count == 2
    report = oens.evaluate(ensemble, test)
    assert report["oracle_accuracy"] >= 0.9
    assert max(report["per_member_accuracy"]) <= 0.65
    assert report["winner_distribution"].shape == (2, 2)
    assert math.isfinite(report["specialization_entropy"])
    assert history["iteration"][0] == 0
    assert history["iteration"][-1] == 600


def test_training_is_deterministic():
    train = oens.gen_clustered_classes(5, 400, 2, 4, 0.5, [(0, 1)], 0.1)
    kwargs = dict(members=2, k=1, iterations=150, batch_size=32, hidden=[8],
                  learning_rate=0.05, seed=9, log_interval=150)
    ens_a, _ = oens.train("smcl", train, train, **kwargs)
    ens_b, _ = oens.train("smcl", train, train, **kwargs)
    la = oens.per_member_losses(ens_a, train)
    lb = oens.per_member_losses(ens_b, train)
    assert np.array_equal(la, lb)


def test_checkpoint_round_trip(tmp_path):
    train = oens.gen_clustered_classes(6, 300, 2, 3, 0.4, [], 0.1)
    ensemble, _ = oens.train("independent", train, train, members=2, iterations=100,
                             batch_size=32, hidden=[8], seed=2, log_interval=100)
    path = str(tmp_path / "ensemble.oens")
    ensemble.save(path)
    loaded = oens.Ensemble.load(path)
    before = oens.evaluate(ensemble, train)
    after = oens.evaluate(loaded, train)
    assert before["oracle_loss"] == after["oracle_loss"]
    assert before["per_member_accuracy"] == after["per_member_accuracy"]


def test_make_dataset_validates():
    inputs = np.zeros((4, 2))
    ds = oens.make_dataset(inputs, [0, 1, 0, 1], class_count=2)
    assert len(ds) == 4
    with pytest.raises(oens.OensError):
        oens.make_dataset(inputs, [0, 1, 0, 5], class_count=2)


def test_invalid_k_raises():
    train = oens.gen_ambiguous(seed=1, n=50, input_dim=2, mode_priors=[1.0])
    with pytest.raises(oens.OensError):
        oens.train("smcl", train, train, members=2, k=3, iterations=10)


def test_gradcheck_passes():
    outcome = oens.gradcheck(trials=10, tolerance=1e-4)
    assert outcome["pass"]
    assert outcome["max_rel_error"] <= 1e-4

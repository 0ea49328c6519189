import numpy as np
import pytest

from conftest import random_net
from oracles import finite_diff_grads
from relukit.datasets import Dataset, Sample, synth_blobs
from relukit.network import BatchNorm1DNode, FullyConnectedNode, forward_batch
from relukit.training import (AdamState, TrainingConfig, adam_step, evaluate,
                              forward_train, init_network, loss_and_grads,
                              train)
from relukit.training import _assign_params, _collect_params


def grad_check(net, xs, ys, config, h=1e-5):
    """Max relative error between analytic and central-difference grads."""
    _, grads, _ = loss_and_grads(net, xs, ys, config)
    work = net.copy()
    params = _collect_params(work)

    def loss_fn(p):
        _assign_params(work, p)
        return loss_and_grads(work, xs, ys, config)[0]

    fd = finite_diff_grads(loss_fn, params, h=h)
    worst = 0.0
    for key in grads:
        a, f = grads[key], fd[key]
        rel = np.abs(a - f) / np.maximum(np.abs(a) + np.abs(f), 1e-6)
        worst = max(worst, float(rel.max()))
    return worst


class TestForwardTrain:
    def test_constant_batch_outputs_beta(self):
        net = random_net([3, 4, 2], seed=0)
        xs = np.tile(np.array([0.3, 0.5, 0.7]), (4, 1))
        _, cache, _ = forward_train(net, xs)
        bn_idx = next(i for i, n in enumerate(net.nodes)
                      if isinstance(n, BatchNorm1DNode))
        # zero batch variance -> normalized activations 0 -> BN output beta
        assert np.allclose(cache[bn_idx]["xhat"], 0.0)

    def test_standardized_batch_identity_regime(self):
        net = init_network([2, 4, 2], seed=1, with_bn=True)
        rng = np.random.default_rng(0)
        xs = rng.normal(size=(200, 2))
        fc = net.nodes[0]
        pre = xs @ fc.weights.T + fc.bias
        pre = (pre - pre.mean(0)) / pre.std(0)
        # feed a batch whose FC output is standardized by construction
        w_inv = np.linalg.pinv(fc.weights.T)
        xs2 = (pre - fc.bias) @ w_inv
        out, cache, _ = forward_train(net, xs2)
        bn_out = net.nodes[1].gamma * cache[1]["xhat"] + net.nodes[1].beta
        assert np.allclose(bn_out, cache[1]["xhat"], atol=1e-8)

    def test_momentum_one_running_stats_equal_batch_stats(self):
        net = random_net([2, 3, 2], seed=2)
        xs = np.random.default_rng(1).normal(size=(8, 2))
        _, cache, updated = forward_train(net, xs, momentum=1.0)
        bn_idx = next(i for i, n in enumerate(net.nodes)
                      if isinstance(n, BatchNorm1DNode))
        bn = updated.nodes[bn_idx]
        assert np.allclose(bn.running_mean, cache[bn_idx]["mu"])
        assert np.allclose(bn.running_var, cache[bn_idx]["var"])

    def test_singleton_batch_with_bn_errors(self):
        net = random_net([2, 3, 2], seed=3)
        with pytest.raises(ValueError, match="batch"):
            forward_train(net, np.zeros((1, 2)))


class TestLossAndGrads:
    def test_perfect_prediction_loss_near_zero(self):
        net = init_network([2, 2], seed=0, with_bn=False)
        net.nodes[0].weights = np.array([[100.0, 0.0], [-100.0, 0.0]])
        xs = np.array([[1.0, 0.0], [-1.0, 0.0]])
        ys = np.array([0, 1])
        loss, _, _ = loss_and_grads(net, xs, ys,
                                    TrainingConfig(l2_lambda=0.0))
        assert loss < 1e-20

    def test_l2_gradient_of_regularizer(self):
        net = init_network([3, 2], seed=4, with_bn=False)
        xs = np.random.default_rng(2).normal(size=(5, 3))
        cfg0 = TrainingConfig(l2_lambda=0.0)
        cfg1 = TrainingConfig(l2_lambda=0.7)
        ys = np.zeros(5, dtype=int)
        _, g0, _ = loss_and_grads(net, xs, ys, cfg0)
        _, g1, _ = loss_and_grads(net, xs, ys, cfg1)
        expected = 0.7 * net.nodes[0].weights / 5
        assert np.allclose(g1["0.weights"] - g0["0.weights"], expected)

    def test_finite_difference_oracle(self):
        rng = np.random.default_rng(10)
        cfg = TrainingConfig(l2_lambda=0.01, slim_lambda=0.001)
        for trial in range(3):
            net = random_net([4, 8, 8, 3], seed=100 + trial)
            xs = rng.uniform(size=(6, 4))
            ys = rng.integers(0, 3, size=6)
            assert grad_check(net, xs, ys, cfg) < 1e-4

    def test_loss_decomposition(self):
        net = random_net([3, 4, 2], seed=5)
        xs = np.random.default_rng(3).uniform(size=(8, 3))
        ys = np.random.default_rng(4).integers(0, 2, size=8)
        cfg = TrainingConfig(l2_lambda=0.1, slim_lambda=0.05)
        loss, _, parts = loss_and_grads(net, xs, ys, cfg)
        assert loss == pytest.approx(parts["surrogate"] + parts["l2"]
                                     + parts["slim"])


class TestAdamStep:
    def test_zero_gradient_fixed_point(self):
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.zeros(2)}
        new, _ = adam_step(params, grads, AdamState(), TrainingConfig())
        assert np.array_equal(new["w"], params["w"])

    def test_first_step_magnitude(self):
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([1.0])}
        cfg = TrainingConfig(learning_rate=0.001)
        new, _ = adam_step(params, grads, AdamState(), cfg)
        assert new["w"][0] == pytest.approx(-0.001, rel=1e-6)

    def test_no_cross_contamination(self):
        params = {"a": np.array([1.0]), "b": np.array([1.0])}
        grads = {"a": np.array([1.0]), "b": np.array([0.0])}
        new, state = adam_step(params, grads, AdamState(), TrainingConfig())
        assert new["a"][0] != 1.0 and new["b"][0] == 1.0
        assert state.t == 1


class TestTrain:
    def test_zero_epochs_is_identity(self):
        net = random_net([2, 4, 2], seed=0)
        ds = synth_blobs(0, 10, 2, 2, 0.1)
        out, metrics = train(net, ds, TrainingConfig(epochs=0))
        assert metrics == []
        for a, b in zip(_collect_params(net).values(),
                        _collect_params(out).values()):
            assert np.array_equal(a, b)

    def test_deterministic(self):
        net = init_network([2, 8, 2], seed=7)
        ds = synth_blobs(2, 25, 2, 2, 0.08)
        cfg = TrainingConfig(epochs=5, batch_size=8, seed=3)
        a, _ = train(net, ds, cfg)
        b, _ = train(net, ds, cfg)
        for pa, pb in zip(_collect_params(a).values(),
                          _collect_params(b).values()):
            assert np.array_equal(pa, pb)

    def test_input_net_not_mutated(self):
        net = init_network([2, 8, 2], seed=7)
        before = {k: v.copy() for k, v in _collect_params(net).items()}
        ds = synth_blobs(2, 25, 2, 2, 0.08)
        train(net, ds, TrainingConfig(epochs=2, batch_size=8))
        for k, v in _collect_params(net).items():
            assert np.array_equal(v, before[k])

    def test_learns_blobs(self):
        ds = synth_blobs(1, 50, 2, 2, 0.05)
        net = init_network([2, 16, 2], seed=1)
        cfg = TrainingConfig(epochs=40, batch_size=16, learning_rate=0.01,
                             seed=1)
        trained, metrics = train(net, ds, cfg)
        assert metrics[-1]["test_accuracy"] >= 0.95

    def test_sparsity_pressure_on_gamma(self):
        ds = synth_blobs(4, 40, 2, 2, 0.08)
        net = init_network([2, 12, 2], seed=2)
        base = TrainingConfig(epochs=30, batch_size=16, learning_rate=0.01,
                              seed=5)
        slim = TrainingConfig(epochs=30, batch_size=16, learning_rate=0.01,
                              seed=5, slim_lambda=0.05)
        dense_net, _ = train(net, ds, base)
        sparse_net, _ = train(net, ds, slim)
        def mean_gamma(n):
            return np.mean([np.abs(node.gamma).mean() for node in n.nodes
                            if isinstance(node, BatchNorm1DNode)])
        assert mean_gamma(sparse_net) <= mean_gamma(dense_net)


class TestEvaluate:
    def test_all_correct(self):
        ds = synth_blobs(1, 20, 2, 2, 0.01)
        net, _ = train(init_network([2, 8, 2], seed=0), ds,
                       TrainingConfig(epochs=30, learning_rate=0.01,
                                      batch_size=8, seed=0))
        acc, wrong = evaluate(net, ds.test)
        assert acc == 1.0 and wrong == 0

    def test_empty_errors(self):
        net = random_net([2, 3, 2], seed=0)
        with pytest.raises(ValueError):
            evaluate(net, [])

    def test_matches_zero_one_risk(self):
        net = random_net([2, 4, 3], seed=1)
        ds = synth_blobs(3, 30, 3, 2, 0.2)
        acc, wrong = evaluate(net, ds.train)
        xs = np.stack([s.input for s in ds.train])
        ys = np.array([s.label for s in ds.train])
        err01 = float((forward_batch(net, xs).argmax(axis=1) != ys).mean())
        assert acc == pytest.approx(1.0 - err01)

    def test_random_net_random_labels_concentration(self):
        net = random_net([4, 8, 2], seed=9)
        rng = np.random.default_rng(6)
        samples = [Sample(rng.uniform(size=4), int(rng.integers(0, 2)))
                   for _ in range(10000)]
        acc, _ = evaluate(net, samples)
        assert 0.45 <= acc <= 0.55

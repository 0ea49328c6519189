"""Native training: batch-stat forward, analytic backprop, Adam updates.

The optimized objective is softmax cross-entropy plus an L2 penalty on
connection weights (lambda / (2 * batch) * sum w^2) plus an L1 penalty on
batch-norm scales (slim_lambda * sum |gamma|). The literal 0-1 risk and the
unsquared L2 regularizer are reported as metrics but never optimized.
"""

from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset
from .network import (BatchNorm1DNode, FullyConnectedNode, ReLUNode,
                      SequentialNetwork, forward_batch, validate)
from .tensor import NonFiniteError

__all__ = ["TrainingConfig", "AdamState", "init_network", "forward_train",
           "loss_and_grads", "adam_step", "train", "evaluate"]


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    l2_lambda: float = 0.0
    slim_lambda: float = 0.0
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    bn_momentum: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1/beta2 must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")
        if self.l2_lambda < 0 or self.slim_lambda < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not (0 < self.bn_momentum <= 1):
            raise ValueError("bn_momentum must lie in (0, 1]")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def init_network(widths: list[int], seed: int = 0, with_bn: bool = True,
                 name: str = "net") -> SequentialNetwork:
    """Seeded fresh network: widths [d, h1, ..., hk, m], FC[-BN]-ReLU blocks.

    FC weights uniform in +-sqrt(6 / (in + out)), biases 0, gamma 1, beta 0,
    running stats (0, 1).
    """
    if len(widths) < 2:
        raise ValueError("need at least input and output widths")
    rng = np.random.default_rng(seed)
    nodes = []
    for i in range(len(widths) - 1):
        d_in, d_out = widths[i], widths[i + 1]
        limit = np.sqrt(6.0 / (d_in + d_out))
        nodes.append(FullyConnectedNode(
            rng.uniform(-limit, limit, size=(d_out, d_in)), np.zeros(d_out)))
        if i < len(widths) - 2:
            if with_bn:
                nodes.append(BatchNorm1DNode(
                    np.ones(d_out), np.zeros(d_out),
                    np.zeros(d_out), np.ones(d_out), 1e-5))
            nodes.append(ReLUNode(d_out))
    return SequentialNetwork(name, widths[0], nodes)


def _collect_params(net: SequentialNetwork) -> dict:
    params = {}
    for i, node in enumerate(net.nodes):
        if isinstance(node, FullyConnectedNode):
            params[f"{i}.weights"] = node.weights
            params[f"{i}.bias"] = node.bias
        elif isinstance(node, BatchNorm1DNode):
            params[f"{i}.gamma"] = node.gamma
            params[f"{i}.beta"] = node.beta
    return params


def _assign_params(net: SequentialNetwork, params: dict) -> None:
    for key, value in params.items():
        idx, name = key.split(".")
        setattr(net.nodes[int(idx)], name, value)


def _has_bn(net: SequentialNetwork) -> bool:
    return any(isinstance(n, BatchNorm1DNode) for n in net.nodes)


def _forward_train(net: SequentialNetwork, xs: np.ndarray):
    """Batch-statistics forward; returns (outputs, per-node cache)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise ValueError(f"expected a (batch, features) matrix, got shape {xs.shape}")
    if xs.shape[0] == 0:
        raise ValueError("empty batch")
    if xs.shape[0] < 2 and _has_bn(net):
        raise ValueError("batch of size 1 cannot feed batch normalization "
                         "(batch variance needs at least 2 points)")
    h = xs
    cache = []
    for node in net.nodes:
        if isinstance(node, FullyConnectedNode):
            cache.append({"input": h})
            h = h @ node.weights.T + node.bias
        elif isinstance(node, BatchNorm1DNode):
            mu = h.mean(axis=0)
            var = h.var(axis=0)  # biased
            inv_std = 1.0 / np.sqrt(var + node.eps)
            xhat = (h - mu) * inv_std
            cache.append({"xhat": xhat, "inv_std": inv_std, "mu": mu, "var": var})
            h = node.gamma * xhat + node.beta
        else:
            mask = h > 0
            cache.append({"mask": mask})
            h = h * mask
    return h, cache


def forward_train(net: SequentialNetwork, xs: np.ndarray,
                  momentum: float = 0.1):
    """Training-mode forward pass with running-statistics update.

    Returns (outputs, cache, updated_net); the input net is not mutated.
    Running stats follow r <- (1 - momentum) * r + momentum * batch_stat.
    """
    outputs, cache = _forward_train(net, xs)
    updated = net.copy()
    for i, node in enumerate(updated.nodes):
        if isinstance(node, BatchNorm1DNode):
            node.running_mean = ((1 - momentum) * node.running_mean
                                 + momentum * cache[i]["mu"])
            node.running_var = ((1 - momentum) * node.running_var
                                + momentum * cache[i]["var"])
    return outputs, cache, updated


def _softmax_ce(logits: np.ndarray, labels: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    n = logits.shape[0]
    ce = -log_p[np.arange(n), labels].mean()
    probs = np.exp(log_p)
    probs[np.arange(n), labels] -= 1.0
    return ce, probs / n


def loss_and_grads(net: SequentialNetwork, xs: np.ndarray, labels: np.ndarray,
                   config: TrainingConfig):
    """Surrogate loss and analytic gradients for every parameter.

    Returns (loss, grads, parts): grads keyed like _collect_params, parts the
    decomposition {"surrogate", "l2", "slim"} plus the per-BN batch stats
    needed for running-stat updates.
    """
    labels = np.asarray(labels, dtype=np.int64)
    logits, cache = _forward_train(net, xs)
    n_b = xs.shape[0]
    if labels.shape[0] != n_b:
        raise ValueError("labels/batch size mismatch")
    ce, dh = _softmax_ce(logits, labels)
    lam, lam_s = config.l2_lambda, config.slim_lambda

    grads = {}
    l2_term = 0.0
    slim_term = 0.0
    for i in range(len(net.nodes) - 1, -1, -1):
        node = net.nodes[i]
        if isinstance(node, FullyConnectedNode):
            x_in = cache[i]["input"]
            dw = dh.T @ x_in
            db = dh.sum(axis=0)
            dh = dh @ node.weights
            if lam > 0:
                l2_term += 0.5 * lam / n_b * float(np.sum(node.weights ** 2))
                dw = dw + lam / n_b * node.weights
            grads[f"{i}.weights"] = dw
            grads[f"{i}.bias"] = db
        elif isinstance(node, BatchNorm1DNode):
            c = cache[i]
            xhat, inv_std = c["xhat"], c["inv_std"]
            dgamma = (dh * xhat).sum(axis=0)
            dbeta = dh.sum(axis=0)
            dxhat = dh * node.gamma
            dh = inv_std * (dxhat - dxhat.mean(axis=0)
                            - xhat * (dxhat * xhat).mean(axis=0))
            if lam_s > 0:
                slim_term += lam_s * float(np.sum(np.abs(node.gamma)))
                # L1 subgradient at 0 taken as 0
                dgamma = dgamma + lam_s * np.sign(node.gamma)
            grads[f"{i}.gamma"] = dgamma
            grads[f"{i}.beta"] = dbeta
        else:
            dh = dh * cache[i]["mask"]

    loss = ce + l2_term + slim_term
    if not np.isfinite(loss):
        raise NonFiniteError("non-finite training loss")
    parts = {"surrogate": float(ce), "l2": float(l2_term),
             "slim": float(slim_term),
             "bn_stats": {i: (cache[i]["mu"], cache[i]["var"])
                          for i, node in enumerate(net.nodes)
                          if isinstance(node, BatchNorm1DNode)}}
    return float(loss), grads, parts


def adam_step(params: dict, grads: dict, state: AdamState,
              config: TrainingConfig):
    """One Adam update over a keyed family of parameter tensors."""
    state.t += 1
    t = state.t
    b1, b2 = config.beta1, config.beta2
    new_params = {}
    for key, theta in params.items():
        g = grads[key]
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[key] = m
        state.v[key] = v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[key] = theta - config.learning_rate * m_hat / (
            np.sqrt(v_hat) + config.adam_eps)
    return new_params, state


def _stack_split(samples):
    xs = np.stack([s.input for s in samples])
    ys = np.array([s.label for s in samples], dtype=np.int64)
    return xs, ys


def _literal_objective(net: SequentialNetwork, xs, ys, lam: float):
    """0-1 empirical risk plus lambda times the unsquared L2 regularizer."""
    preds = forward_batch(net, xs).argmax(axis=1)
    err01 = float((preds != ys).mean())
    sq = sum(float(np.sum(n.weights ** 2)) for n in net.nodes
             if isinstance(n, FullyConnectedNode))
    reg = np.sqrt(sq) / (2 * xs.shape[0])
    return err01 + lam * reg, err01, reg


def train(net: SequentialNetwork, dataset: Dataset, config: TrainingConfig):
    """Mini-batch Adam training; returns (trained_net, per-epoch metrics).

    Deterministic for fixed (net, dataset, config); the input net is not
    mutated.
    """
    errors = validate(net)
    if errors:
        raise ValueError("invalid network: " + "; ".join(errors))
    if dataset.input_dim != net.input_dim:
        raise ValueError("dataset input_dim does not match network")
    net = net.copy()
    metrics: list[dict] = []
    if config.epochs == 0 or not dataset.train:
        return net, metrics

    xs_all, ys_all = _stack_split(dataset.train)
    n = xs_all.shape[0]
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    has_bn = _has_bn(net)

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        starts = list(range(0, n, config.batch_size))
        # A trailing singleton batch cannot feed batch norm; merge it back.
        if has_bn and len(starts) > 1 and n - starts[-1] == 1:
            starts.pop()
        epoch_parts = {"surrogate": 0.0, "l2": 0.0, "slim": 0.0}
        epoch_loss = 0.0
        for b, start in enumerate(starts):
            idx = perm[start:start + config.batch_size] if b < len(starts) - 1 \
                else perm[start:]
            loss, grads, parts = loss_and_grads(net, xs_all[idx], ys_all[idx],
                                                config)
            params = _collect_params(net)
            params, state = adam_step(params, grads, state, config)
            _assign_params(net, params)
            for i, (mu, var) in parts["bn_stats"].items():
                bn = net.nodes[i]
                bn.running_mean = ((1 - config.bn_momentum) * bn.running_mean
                                   + config.bn_momentum * mu)
                bn.running_var = ((1 - config.bn_momentum) * bn.running_var
                                  + config.bn_momentum * var)
            epoch_loss += loss
            for key in epoch_parts:
                epoch_parts[key] += parts[key]

        n_batches = len(starts)
        train_acc, _ = evaluate(net, dataset.train)
        test_acc = evaluate(net, dataset.test)[0] if dataset.test else float("nan")
        literal_j, err01, literal_reg = _literal_objective(
            net, xs_all, ys_all, config.l2_lambda)
        metrics.append({
            "epoch": epoch,
            "loss": epoch_loss / n_batches,
            "loss_surrogate": epoch_parts["surrogate"] / n_batches,
            "loss_l2": epoch_parts["l2"] / n_batches,
            "loss_slim": epoch_parts["slim"] / n_batches,
            "literal_objective": literal_j,
            "literal_err01": err01,
            "literal_regularizer": literal_reg,
            "train_accuracy": train_acc,
            "test_accuracy": test_acc,
        })
    return net, metrics


def evaluate(net: SequentialNetwork, samples):
    """(accuracy, misclassification count) over a sample list."""
    if not samples:
        raise ValueError("cannot evaluate on an empty sample list")
    xs, ys = _stack_split(samples)
    preds = forward_batch(net, xs).argmax(axis=1)
    wrong = int((preds != ys).sum())
    return 1.0 - wrong / len(samples), wrong

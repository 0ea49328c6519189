"""Internal network representation: a validated sequence of layer nodes.

A canonical network is a chain of hidden blocks, each fully-connected
optionally followed by 1-D batch norm and then ReLU, ending in a bare
fully-connected output layer (no activation after it).
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeMismatchError, argmax, as_matrix, as_vector, check_finite

__all__ = [
    "FullyConnectedNode",
    "BatchNorm1DNode",
    "ReLUNode",
    "SequentialNetwork",
    "validate",
    "forward",
    "forward_batch",
    "classify",
    "fold_batchnorm",
    "network_stats",
]


@dataclass
class FullyConnectedNode:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray     # (out_dim,)

    def __post_init__(self):
        self.weights = as_matrix(self.weights)
        self.bias = as_vector(self.bias)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "FullyConnectedNode":
        return FullyConnectedNode(self.weights.copy(), self.bias.copy())


@dataclass
class BatchNorm1DNode:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self):
        self.gamma = as_vector(self.gamma)
        self.beta = as_vector(self.beta)
        self.running_mean = as_vector(self.running_mean)
        self.running_var = as_vector(self.running_var)
        self.eps = float(self.eps)

    @property
    def dim(self) -> int:
        return self.gamma.shape[0]

    def scale(self) -> np.ndarray:
        """Inference-mode multiplier gamma / sqrt(var + eps)."""
        return self.gamma / np.sqrt(self.running_var + self.eps)

    def copy(self) -> "BatchNorm1DNode":
        return BatchNorm1DNode(
            self.gamma.copy(), self.beta.copy(),
            self.running_mean.copy(), self.running_var.copy(), self.eps,
        )


@dataclass
class ReLUNode:
    dim: int

    def copy(self) -> "ReLUNode":
        return ReLUNode(self.dim)


LayerNode = FullyConnectedNode | BatchNorm1DNode | ReLUNode


@dataclass
class SequentialNetwork:
    name: str
    input_dim: int
    nodes: list = field(default_factory=list)

    @property
    def output_dim(self) -> int:
        if not self.nodes:
            return self.input_dim
        last = self.nodes[-1]
        return last.out_dim if isinstance(last, FullyConnectedNode) else last.dim

    def copy(self) -> "SequentialNetwork":
        return SequentialNetwork(self.name, self.input_dim,
                                 [n.copy() for n in self.nodes])


def _node_dims(node: LayerNode) -> tuple[int, int]:
    if isinstance(node, FullyConnectedNode):
        return node.in_dim, node.out_dim
    return node.dim, node.dim


def validate(net: SequentialNetwork) -> list[str]:
    """Return a list of structural problems; empty means the network is ok."""
    errors: list[str] = []
    if net.input_dim <= 0:
        errors.append(f"input_dim must be positive, got {net.input_dim}")
    if not net.nodes:
        errors.append("network has no nodes")
        return errors

    cur = net.input_dim
    for i, node in enumerate(net.nodes):
        d_in, d_out = _node_dims(node)
        if d_in != cur:
            errors.append(f"dim mismatch at node {i}: expected input {cur}, got {d_in}")
        cur = d_out
        if isinstance(node, FullyConnectedNode):
            if not np.all(np.isfinite(node.weights)) or not np.all(np.isfinite(node.bias)):
                errors.append(f"non-finite parameters at node {i}")
        elif isinstance(node, BatchNorm1DNode):
            for name, v in (("gamma", node.gamma), ("beta", node.beta),
                            ("running_mean", node.running_mean),
                            ("running_var", node.running_var)):
                if v.shape[0] != node.dim:
                    errors.append(f"{name} length {v.shape[0]} != dim {node.dim} at node {i}")
                if not np.all(np.isfinite(v)):
                    errors.append(f"non-finite {name} at node {i}")
            if np.any(node.running_var < 0):
                errors.append(f"negative running_var at node {i}")
            if node.eps <= 0:
                errors.append(f"eps must be positive at node {i}")

    # Canonical block pattern: (FC [BN] ReLU)* FC
    i, n = 0, len(net.nodes)
    while i < n:
        node = net.nodes[i]
        if not isinstance(node, FullyConnectedNode):
            errors.append(f"canonical-form error at node {i}: expected fully-connected, "
                          f"got {type(node).__name__}")
            break
        if i == n - 1:
            break  # output layer, done
        i += 1
        if isinstance(net.nodes[i], BatchNorm1DNode):
            i += 1
        if i >= n or not isinstance(net.nodes[i], ReLUNode):
            got = type(net.nodes[i]).__name__ if i < n else "end of network"
            errors.append(f"canonical-form error at node {i if i < n else n - 1}: "
                          f"hidden block must end with ReLU, got {got}")
            break
        i += 1
        if i >= n:
            errors.append(f"canonical-form error at node {n - 1}: "
                          "network must end with a fully-connected layer")
            break
    return errors


def _require_valid(net: SequentialNetwork) -> None:
    errors = validate(net)
    if errors:
        raise ValueError("invalid network: " + "; ".join(errors))


def forward(net: SequentialNetwork, x) -> np.ndarray:
    """Inference-mode output; batch norm uses running statistics."""
    x = as_vector(x)
    if x.shape[0] != net.input_dim:
        raise ShapeMismatchError(
            f"input length {x.shape[0]} != network input_dim {net.input_dim}")
    h = x
    for i, node in enumerate(net.nodes):
        if isinstance(node, FullyConnectedNode):
            if h.shape[0] != node.in_dim:
                raise ShapeMismatchError(f"dim mismatch entering node {i}")
            h = node.weights @ h + node.bias
        elif isinstance(node, BatchNorm1DNode):
            h = node.scale() * (h - node.running_mean) + node.beta
        else:
            h = np.maximum(0.0, h)
        check_finite(h, f"output of node {i}")
    return h


def forward_batch(net: SequentialNetwork, xs: np.ndarray) -> np.ndarray:
    """Inference forward over a (batch, input_dim) matrix of inputs."""
    h = np.asarray(xs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ShapeMismatchError(f"expected (batch, {net.input_dim}) inputs, got {h.shape}")
    for node in net.nodes:
        if isinstance(node, FullyConnectedNode):
            h = h @ node.weights.T + node.bias
        elif isinstance(node, BatchNorm1DNode):
            h = node.scale() * (h - node.running_mean) + node.beta
        else:
            h = np.maximum(0.0, h)
    return h


def classify(net: SequentialNetwork, x) -> int:
    return argmax(forward(net, x))


def fold_batchnorm(net: SequentialNetwork) -> SequentialNetwork:
    """Fuse every FC-BN pair into one FC node; function is preserved.

    With s = gamma / sqrt(var + eps): W' = diag(s) W, b' = s * (b - mean) + beta.
    """
    _require_valid(net)
    folded: list[LayerNode] = []
    i = 0
    while i < len(net.nodes):
        node = net.nodes[i]
        if (isinstance(node, FullyConnectedNode) and i + 1 < len(net.nodes)
                and isinstance(net.nodes[i + 1], BatchNorm1DNode)):
            bn = net.nodes[i + 1]
            s = bn.scale()
            folded.append(FullyConnectedNode(
                s[:, None] * node.weights,
                s * (node.bias - bn.running_mean) + bn.beta,
            ))
            i += 2
        else:
            folded.append(node.copy())
            i += 1
    return SequentialNetwork(net.name, net.input_dim, folded)


def network_stats(net: SequentialNetwork) -> dict:
    """Layer count, dims, per-layer widths and total parameter count."""
    _require_valid(net)
    widths = [net.input_dim]
    params = 0
    num_layers = 0
    for node in net.nodes:
        if isinstance(node, FullyConnectedNode):
            widths.append(node.out_dim)
            params += node.weights.size + node.bias.size
            num_layers += 1
        elif isinstance(node, BatchNorm1DNode):
            params += 4 * node.dim
    return {
        "num_layers": num_layers,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "widths": widths,
        "param_count": params,
    }

"""Native verification engine: interval bound propagation plus branch and
bound with exact activation-pattern leaf decisions.

Networks are batch-norm-folded before analysis, so the engine only ever sees
alternating fully-connected and ReLU layers. Verdicts are violation-oriented:
Verified means no input in the box satisfies any violation disjunct,
Falsified comes with a concretely re-validated counterexample.
"""

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .network import (FullyConnectedNode, ReLUNode, SequentialNetwork,
                      fold_batchnorm, forward, forward_batch)
from .properties import (Box, LinearAtom, Property, satisfies_disjunct,
                         violated_disjunct)

__all__ = ["Status", "Counterexample", "VerificationResult", "BabConfig",
           "interval_forward", "verify_ibp", "verify_bab", "check_pattern",
           "lp_feasible", "falsify_sample", "root_unstable_count",
           "LPUndecidedError", "SpuriousWitnessError"]

CEX_TOL = 1e-7


class Status(str, Enum):
    VERIFIED = "Verified"
    FALSIFIED = "Falsified"
    UNKNOWN = "Unknown"


class LPUndecidedError(RuntimeError):
    """LP solver gave neither a feasible point nor an infeasibility proof."""


class SpuriousWitnessError(RuntimeError):
    """LP point failed concrete re-validation; node must be treated as
    undecided."""


@dataclass
class Counterexample:
    input: np.ndarray
    output: np.ndarray
    disjunct: int


@dataclass
class VerificationResult:
    status: Status
    counterexample: Optional[Counterexample] = None
    stats: dict = field(default_factory=dict)


@dataclass
class BabConfig:
    max_nodes: int = 100000
    min_box_width: float = 1e-6
    enum_threshold: int = 12
    time_budget: float = 600.0
    sample_count: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.max_nodes < 1 or self.enum_threshold < 0 \
                or self.min_box_width <= 0 or self.time_budget <= 0 \
                or self.sample_count < 0:
            raise ValueError("BabConfig fields must be positive")


def _folded(net: SequentialNetwork) -> SequentialNetwork:
    if any(not isinstance(n, (FullyConnectedNode, ReLUNode)) for n in net.nodes):
        return fold_batchnorm(net)
    return net


def _check_folded(net: SequentialNetwork) -> None:
    if any(not isinstance(n, (FullyConnectedNode, ReLUNode)) for n in net.nodes):
        raise ValueError("expected a folded (FC/ReLU only) network")


def interval_forward(net: SequentialNetwork, box: Box):
    """Per-node interval bounds over a folded network.

    Returns a list aligned with net.nodes; FC entries carry pre-activation
    bounds, ReLU entries the clamped post-activation bounds. Sound: every
    concrete activation for x in box lies inside its interval.
    """
    _check_folded(net)
    lo, hi = box.lo.copy(), box.hi.copy()
    bounds = []
    for node in net.nodes:
        if isinstance(node, FullyConnectedNode):
            w_pos = np.maximum(node.weights, 0.0)
            w_neg = np.minimum(node.weights, 0.0)
            lo, hi = (w_pos @ lo + w_neg @ hi + node.bias,
                      w_pos @ hi + w_neg @ lo + node.bias)
        else:
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        bounds.append((lo, hi))
    return bounds


def _atom_lower_bound(atom: LinearAtom, lo: np.ndarray, hi: np.ndarray) -> float:
    pos = np.maximum(atom.coeffs, 0.0)
    neg = np.minimum(atom.coeffs, 0.0)
    return float(pos @ lo + neg @ hi)


def _refuted_disjuncts(violation, lo, hi):
    """Indices of disjuncts that the output bounds prove unsatisfiable."""
    out = set()
    for j, disjunct in enumerate(violation):
        if any(_atom_lower_bound(a, lo, hi) > a.rhs for a in disjunct):
            out.add(j)
    return out


def _validated_cex(net, prop, x) -> Optional[Counterexample]:
    y = forward(net, x)
    j = violated_disjunct(y, prop.violation, tol=CEX_TOL)
    if j is None:
        return None
    return Counterexample(np.asarray(x, dtype=np.float64), y, j)


def _sample_points(box: Box, count: int, rng) -> np.ndarray:
    center = box.center()[None, :]
    if count == 0:
        return center
    pts = rng.uniform(box.lo, box.hi, size=(count, box.dim))
    return np.vstack([center, pts])


def _find_witness(net, prop, points, alive=None) -> Optional[Counterexample]:
    ys = forward_batch(net, points)
    disjuncts = range(len(prop.violation)) if alive is None else alive
    for i in range(points.shape[0]):
        for j in disjuncts:
            if satisfies_disjunct(ys[i], prop.violation[j], tol=0.0):
                return Counterexample(points[i], ys[i], j)
    return None


def verify_ibp(net: SequentialNetwork, prop: Property,
               sample_count: int = 32, seed: int = 0) -> VerificationResult:
    """One-shot interval verification with a quick sampling falsification."""
    start = time.monotonic()
    folded = _folded(net)
    bounds = interval_forward(folded, prop.input_box)
    lo, hi = bounds[-1]
    refuted = _refuted_disjuncts(prop.violation, lo, hi)
    stats = {"nodes": 1, "lp_calls": 0}
    if len(refuted) == len(prop.violation):
        stats["wall_time"] = time.monotonic() - start
        return VerificationResult(Status.VERIFIED, stats=stats)
    rng = np.random.default_rng(seed)
    witness = _find_witness(folded, prop,
                            _sample_points(prop.input_box, sample_count, rng))
    stats["wall_time"] = time.monotonic() - start
    if witness is not None:
        cex = _validated_cex(net, prop, witness.input)
        if cex is not None:
            return VerificationResult(Status.FALSIFIED, cex, stats)
    stats["reason"] = "IBP inconclusive"
    return VerificationResult(Status.UNKNOWN, stats=stats)


def lp_feasible(a_ub: np.ndarray, b_ub: np.ndarray, box: Box):
    """Point satisfying a_ub @ x <= b_ub inside the box, or None if the
    system is infeasible. Raises LPUndecidedError on solver distress."""
    bounds = list(zip(box.lo, box.hi))
    if a_ub.shape[0] == 0:
        return box.center()
    res = linprog(c=np.zeros(box.dim), A_ub=a_ub, b_ub=b_ub, bounds=bounds,
                  method="highs")
    if res.status == 0:
        return np.asarray(res.x, dtype=np.float64)
    if res.status == 2:
        return None
    raise LPUndecidedError(f"linprog status {res.status}: {res.message}")


def _affine_maps(net: SequentialNetwork, pattern: np.ndarray):
    """Affine expression of every pre-activation and the output as functions
    of the input, under a total activation pattern (1 active, 0 inactive).

    Returns (sign_rows, sign_rhs, a_out, c_out): sign constraints already
    oriented as rows @ x <= rhs.
    """
    _check_folded(net)
    d = net.input_dim
    a = np.eye(d)
    c = np.zeros(d)
    sign_rows = []
    sign_rhs = []
    k = 0
    fc_nodes = [n for n in net.nodes if isinstance(n, FullyConnectedNode)]
    for li, node in enumerate(fc_nodes):
        a = node.weights @ a
        c = node.weights @ c + node.bias
        if li == len(fc_nodes) - 1:
            break
        width = node.out_dim
        active = pattern[k:k + width].astype(bool)
        k += width
        # active: pre >= 0  ->  -row @ x <= const ; inactive: row @ x <= -const
        sign_rows.append(np.where(active[:, None], -a, a))
        sign_rhs.append(np.where(active, c, -c))
        a = a * active[:, None]
        c = c * active
    if k != pattern.shape[0]:
        raise ValueError(f"pattern length {pattern.shape[0]} != hidden "
                         f"neuron count {k}")
    rows = np.vstack(sign_rows) if sign_rows else np.zeros((0, d))
    rhs = np.concatenate(sign_rhs) if sign_rhs else np.zeros(0)
    return rows, rhs, a, c


def check_pattern(net: SequentialNetwork, box: Box, pattern: np.ndarray,
                  disjunct) -> Optional[np.ndarray]:
    """Feasibility of one total activation pattern against one disjunct.

    Returns a witness input or None (infeasible). A witness failing concrete
    re-validation raises SpuriousWitnessError.
    """
    rows, rhs, a_out, c_out = _affine_maps(net, np.asarray(pattern))
    atom_rows = np.stack([atom.coeffs @ a_out for atom in disjunct])
    atom_rhs = np.array([atom.rhs - float(atom.coeffs @ c_out)
                         for atom in disjunct])
    x = lp_feasible(np.vstack([rows, atom_rows]),
                    np.concatenate([rhs, atom_rhs]), box)
    if x is None:
        return None
    y = forward(net, x)
    if not satisfies_disjunct(y, disjunct, tol=CEX_TOL):
        raise SpuriousWitnessError("LP witness failed concrete re-validation")
    return x


def _enum_decide(net, box, prop, alive, pre_bounds, counters):
    """Exact decision for a node whose free neurons are enumerable.

    Returns a Counterexample, or None when the node is proven safe.
    """
    los = np.concatenate([b[0] for b in pre_bounds])
    his = np.concatenate([b[1] for b in pre_bounds])
    base = np.where(los >= 0.0, 1, 0)
    free = np.flatnonzero((los < 0.0) & (his > 0.0))
    for bits in range(1 << free.size):
        pattern = base.copy()
        for b in range(free.size):
            pattern[free[b]] = (bits >> b) & 1
        for j in alive:
            counters["lp_calls"] += 1
            x = check_pattern(net, box, pattern, prop.violation[j])
            if x is not None:
                cex = _validated_cex(net, prop, x)
                if cex is None:
                    raise SpuriousWitnessError(
                        "pattern witness failed property re-validation")
                return cex
    return None


def verify_bab(net: SequentialNetwork, prop: Property,
               config: BabConfig = None) -> VerificationResult:
    """Branch-and-bound decision over the input box.

    Per node: IBP refutation, concrete sampling, exact enumeration when few
    ReLUs are unstable, else split the widest input dimension at its
    midpoint. Verified only when every node is refuted or exactly decided
    safe; Falsified only with a concretely re-validated counterexample.
    """
    if config is None:
        config = BabConfig()
    start = time.monotonic()
    folded = _folded(net)
    rng = np.random.default_rng(config.seed)
    counters = {"lp_calls": 0}
    worklist = [prop.input_box]
    nodes = 0
    undecided = 0

    def result(status, cex=None, reason=None):
        stats = {"nodes": nodes, "lp_calls": counters["lp_calls"],
                 "wall_time": time.monotonic() - start}
        if reason:
            stats["reason"] = reason
        return VerificationResult(status, cex, stats)

    while worklist:
        if nodes >= config.max_nodes:
            return result(Status.UNKNOWN, reason="node budget exhausted")
        if time.monotonic() - start > config.time_budget:
            return result(Status.UNKNOWN, reason="time budget exhausted")
        box = worklist.pop()
        nodes += 1

        bounds = interval_forward(folded, box)
        out_lo, out_hi = bounds[-1]
        refuted = _refuted_disjuncts(prop.violation, out_lo, out_hi)
        alive = [j for j in range(len(prop.violation)) if j not in refuted]
        if not alive:
            continue

        witness = _find_witness(folded, prop,
                                _sample_points(box, config.sample_count, rng),
                                alive=None)
        if witness is not None:
            cex = _validated_cex(net, prop, witness.input)
            if cex is not None:
                return result(Status.FALSIFIED, cex)

        pre_bounds = [bounds[i] for i, n in enumerate(folded.nodes)
                      if isinstance(n, FullyConnectedNode)][:-1]
        free = sum(int(np.sum((b[0] < 0.0) & (b[1] > 0.0))) for b in pre_bounds)
        widths = box.hi - box.lo
        split_dim = int(np.argmax(widths))
        can_split = widths[split_dim] >= config.min_box_width
        if free <= config.enum_threshold or not can_split:
            if free > config.enum_threshold:
                undecided += 1  # box too thin to split, too wide to enumerate
                continue
            try:
                cex = _enum_decide(folded, box, prop, alive, pre_bounds,
                                   counters)
            except (SpuriousWitnessError, LPUndecidedError):
                if not can_split:
                    undecided += 1
                    continue
                mid = (box.lo[split_dim] + box.hi[split_dim]) / 2.0
                left_hi = box.hi.copy(); left_hi[split_dim] = mid
                right_lo = box.lo.copy(); right_lo[split_dim] = mid
                worklist.append(Box(box.lo.copy(), left_hi))
                worklist.append(Box(right_lo, box.hi.copy()))
                continue
            if cex is not None:
                return result(Status.FALSIFIED, cex)
            continue

        mid = (box.lo[split_dim] + box.hi[split_dim]) / 2.0
        left_hi = box.hi.copy(); left_hi[split_dim] = mid
        right_lo = box.lo.copy(); right_lo[split_dim] = mid
        worklist.append(Box(box.lo.copy(), left_hi))
        worklist.append(Box(right_lo, box.hi.copy()))

    if undecided:
        return result(Status.UNKNOWN,
                      reason=f"{undecided} nodes hit the minimum box width")
    return result(Status.VERIFIED)


def falsify_sample(net: SequentialNetwork, prop: Property, n_samples: int,
                   seed: int = 0) -> Optional[Counterexample]:
    """Seeded random falsification: box corners (when dim <= 12) plus
    uniform samples; returns the first validated witness."""
    folded = _folded(net)
    box = prop.input_box
    points = []
    if box.dim <= 12:
        grid = np.stack(np.meshgrid(*[(box.lo[i], box.hi[i])
                                      for i in range(box.dim)],
                                    indexing="ij"), axis=-1)
        points.append(grid.reshape(-1, box.dim))
    if n_samples > 0:
        rng = np.random.default_rng(seed)
        points.append(rng.uniform(box.lo, box.hi, size=(n_samples, box.dim)))
    witness = _find_witness(folded, prop, np.vstack(points))
    if witness is None:
        return None
    return _validated_cex(net, prop, witness.input)


def root_unstable_count(net: SequentialNetwork, box: Box) -> int:
    """Number of hidden ReLUs whose root IBP pre-activation straddles 0."""
    folded = _folded(net)
    bounds = interval_forward(folded, box)
    pre = [bounds[i] for i, n in enumerate(folded.nodes)
           if isinstance(n, FullyConnectedNode)][:-1]
    return sum(int(np.sum((b[0] < 0.0) & (b[1] > 0.0))) for b in pre)

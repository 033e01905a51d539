"""Gradient-boosted regression trees over cell feature vectors.

Squared-error boosting built from scratch: each round fits a depth-bounded
tree to the residuals with greedy variance-reduction splits and adds it
scaled by the shrinkage rate. Splitting is fully deterministic — on equal
gain the lowest feature index wins, then the lowest threshold — so
predictions are invariant under permutation of the training set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cellspace as cs
from . import metrics
from .errors import (
    BadConfig,
    DimensionMismatch,
    FormatError,
    InsufficientData,
    ShapeMismatch,
)
from .rng import root


@dataclass(frozen=True)
class PredictorHyper:
    n_trees: int = 200
    max_depth: int = 4
    shrinkage: float = 0.1
    min_samples_leaf: int = 2
    seed: int = 0

    def __post_init__(self):
        if min(self.n_trees, self.max_depth, self.min_samples_leaf) < 1 or self.shrinkage <= 0:
            raise BadConfig("predictor hyperparameters must be positive")


@dataclass
class TreeNode:
    feature: int = -1  # -1 marks a leaf
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass
class Tree:
    nodes: list[TreeNode] = field(default_factory=list)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf values for rows of x, vectorized per node."""
        out = np.empty(x.shape[0], dtype=np.float64)
        stack = [(0, np.arange(x.shape[0]))]
        while stack:
            node_id, idx = stack.pop()
            node = self.nodes[node_id]
            if node.is_leaf:
                out[idx] = node.value
                continue
            mask = x[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[mask]))
            stack.append((node.right, idx[~mask]))
        return out


@dataclass
class PredictorModel:
    base: float
    shrinkage: float
    n_features: int
    trees: list[Tree] = field(default_factory=list)


def _best_split(x: np.ndarray, residuals: np.ndarray, min_leaf: int):
    """Greedy variance-reduction split; ties broken toward the lowest
    feature index, then the lowest threshold."""
    n = x.shape[0]
    total_sum = residuals.sum()
    total_sq = float(residuals @ residuals)
    parent_sse = total_sq - total_sum * total_sum / n
    best = None  # (gain, feature, threshold)
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        rs = residuals[order]
        csum = np.cumsum(rs)
        csq = np.cumsum(rs * rs)
        for i in range(min_leaf - 1, n - min_leaf):
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = n - nl
            sl, ql = csum[i], csq[i]
            sr, qr = total_sum - sl, total_sq - ql
            sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
            gain = parent_sse - sse
            if gain > 0 and (best is None or gain > best[0]):
                best = (float(gain), j, float(0.5 * (xs[i] + xs[i + 1])))
    return best


def _grow(x, residuals, depth, hyper, nodes):
    node_id = len(nodes)
    nodes.append(TreeNode())
    n = x.shape[0]
    if depth >= hyper.max_depth or n < 2 * hyper.min_samples_leaf:
        nodes[node_id].value = float(residuals.mean()) if n else 0.0
        return node_id
    split = _best_split(x, residuals, hyper.min_samples_leaf)
    if split is None:
        nodes[node_id].value = float(residuals.mean())
        return node_id
    _, feature, threshold = split
    mask = x[:, feature] <= threshold
    nodes[node_id].feature = feature
    nodes[node_id].threshold = threshold
    nodes[node_id].left = _grow(x[mask], residuals[mask], depth + 1, hyper, nodes)
    nodes[node_id].right = _grow(x[~mask], residuals[~mask], depth + 1, hyper, nodes)
    return node_id


def fit(features, targets, hyper: PredictorHyper):
    """Boost trees on squared error; returns (model, per-round training MSE)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64).ravel()
    if x.ndim != 2:
        raise ShapeMismatch("features must be a 2-d matrix")
    if x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"{x.shape[0]} feature rows vs {y.shape[0]} targets")
    if x.shape[0] < 2:
        raise InsufficientData("need at least 2 training rows")
    model = PredictorModel(base=float(y.mean()), shrinkage=hyper.shrinkage, n_features=x.shape[1])
    current = np.full(y.shape[0], model.base, dtype=np.float64)
    losses = []
    for _ in range(hyper.n_trees):
        residuals = y - current
        nodes: list[TreeNode] = []
        _grow(x, residuals, 0, hyper, nodes)
        tree = Tree(nodes=nodes)
        current = current + hyper.shrinkage * tree.apply(x)
        model.trees.append(tree)
        losses.append(float(np.mean((y - current) ** 2)))
    return model, losses


def predict(model: PredictorModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"feature length {x.shape[1]} != training dimension {model.n_features}"
        )
    out = np.full(x.shape[0], model.base, dtype=np.float64)
    for tree in model.trees:
        out += model.shrinkage * tree.apply(x)
    return out[0] if single else out


@dataclass(frozen=True)
class FoldStats:
    fold: int
    pearson: float
    kendall_tau: float
    n_test: int


@dataclass(frozen=True)
class CrossValStats:
    mean_pearson: float
    mean_kendall_tau: float
    folds: tuple[FoldStats, ...]


def cross_validate(records, folds: int, hyper: PredictorHyper, space: cs.SpaceConfig) -> CrossValStats:
    """Seeded k-fold split of PerfRecords; rank correlations on held-out folds."""
    records = list(records)
    if folds < 2:
        raise BadConfig("need at least 2 folds")
    if len(records) < 2 * folds:
        raise InsufficientData(
            f"{len(records)} records cannot fill {folds} folds of at least 2"
        )
    x = np.stack([cs.encode_features(cs.parse(r.arch), space) for r in records])
    y = np.array([r.auc for r in records], dtype=np.float64)
    order = root(hyper.seed).child("cv").generator().permutation(len(records))
    assignments = np.empty(len(records), dtype=np.int64)
    for pos, idx in enumerate(order):
        assignments[idx] = pos % folds
    stats = []
    for fold in range(folds):
        test_mask = assignments == fold
        model, _ = fit(x[~test_mask], y[~test_mask], hyper)
        preds = predict(model, x[test_mask])
        stats.append(
            FoldStats(
                fold=fold,
                pearson=metrics.pearson(preds, y[test_mask]),
                kendall_tau=metrics.kendall_tau(preds, y[test_mask]),
                n_test=int(test_mask.sum()),
            )
        )
    return CrossValStats(
        mean_pearson=float(np.mean([s.pearson for s in stats])),
        mean_kendall_tau=float(np.mean([s.kendall_tau for s in stats])),
        folds=tuple(stats),
    )


MODEL_HEADER = "soapnas-predictor v1"


def save_model(model: PredictorModel, path) -> None:
    lines = [
        MODEL_HEADER,
        f"n_features {model.n_features}",
        f"base {model.base!r}",
        f"shrinkage {model.shrinkage!r}",
        f"n_trees {len(model.trees)}",
    ]
    for t_idx, tree in enumerate(model.trees):
        lines.append(f"tree {t_idx} {len(tree.nodes)}")
        for node in tree.nodes:
            if node.is_leaf:
                lines.append(f"leaf {node.value!r}")
            else:
                lines.append(
                    f"split {node.feature} {node.threshold!r} {node.left} {node.right}"
                )
    lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> PredictorModel:
    with open(path, encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MODEL_HEADER:
        raise FormatError(f"bad model header in {path}")
    try:
        n_features = int(lines[1].split()[1])
        base = float(lines[2].split()[1])
        shrinkage = float(lines[3].split()[1])
        n_trees = int(lines[4].split()[1])
        model = PredictorModel(base=base, shrinkage=shrinkage, n_features=n_features)
        pos = 5
        for _ in range(n_trees):
            head = lines[pos].split()
            if head[0] != "tree":
                raise FormatError(f"expected tree record at line {pos + 1}")
            n_nodes = int(head[2])
            pos += 1
            nodes = []
            for _ in range(n_nodes):
                parts = lines[pos].split()
                pos += 1
                if parts[0] == "leaf":
                    nodes.append(TreeNode(value=float(parts[1])))
                elif parts[0] == "split":
                    nodes.append(
                        TreeNode(
                            feature=int(parts[1]),
                            threshold=float(parts[2]),
                            left=int(parts[3]),
                            right=int(parts[4]),
                        )
                    )
                else:
                    raise FormatError(f"unknown node kind {parts[0]!r} at line {pos}")
            model.trees.append(Tree(nodes=nodes))
        if lines[pos] != "end":
            raise FormatError("missing end marker")
    except (IndexError, ValueError) as exc:
        raise FormatError(f"malformed model file {path}: {exc}") from exc
    return model

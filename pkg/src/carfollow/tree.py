"""Fixed-size least-squares regression trees grown best-first.

The tree is the weak learner of the boosting loop: a binary tree with
mean-valued leaves, grown by repeatedly taking the single split (over all
current leaves, features, and candidate thresholds) that reduces training
SSE the most, until the split budget is exhausted or no admissible split
helps.  Everything is deterministic: candidate thresholds are midpoints
between consecutive distinct sorted feature values, and ties are broken by
leaf creation order, then smaller feature index, then smaller threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTraining


@dataclass(frozen=True)
class Leaf:
    value: float
    n: int


@dataclass(frozen=True)
class SplitNode:
    """Internal node: route left iff ``x[feature_index] <= threshold``."""

    feature_index: int
    threshold: float
    left: "SplitNode | Leaf"
    right: "SplitNode | Leaf"


@dataclass(frozen=True)
class RegressionTree:
    root: SplitNode | Leaf
    n_splits: int
    max_splits: int
    min_leaf: int

    def predict(self, X) -> np.ndarray:
        """Leaf values for each row of ``X`` (accepts a single 3-vector too)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        out = np.empty(len(X))
        _route(self.root, X, np.arange(len(X)), out)
        return out[0] if single else out

    def to_dict(self) -> dict:
        return _node_to_dict(self.root)

    @staticmethod
    def from_dict(d: dict, max_splits: int | None = None,
                  min_leaf: int = 1) -> "RegressionTree":
        root, n_splits = _node_from_dict(d)
        return RegressionTree(
            root=root,
            n_splits=n_splits,
            max_splits=n_splits if max_splits is None else max_splits,
            min_leaf=min_leaf,
        )


def _route(node, X: np.ndarray, rows: np.ndarray, out: np.ndarray) -> None:
    if isinstance(node, Leaf):
        out[rows] = node.value
        return
    go_left = X[rows, node.feature_index] <= node.threshold
    _route(node.left, X, rows[go_left], out)
    _route(node.right, X, rows[~go_left], out)


def _node_to_dict(node) -> dict:
    if isinstance(node, Leaf):
        return {"value": node.value, "n": node.n}
    return {
        "feature": node.feature_index,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(d: dict):
    if "value" in d:
        return Leaf(value=float(d["value"]), n=int(d["n"])), 0
    left, nl = _node_from_dict(d["left"])
    right, nr = _node_from_dict(d["right"])
    node = SplitNode(
        feature_index=int(d["feature"]),
        threshold=float(d["threshold"]),
        left=left,
        right=right,
    )
    return node, nl + nr + 1


class _GrowingLeaf:
    """Mutable bookkeeping for a leaf while the tree is being grown."""

    __slots__ = ("rows", "order", "gain", "feature", "threshold", "n_left")

    def __init__(self, rows: np.ndarray):
        self.rows = rows
        self.order = None
        self.gain = -np.inf
        self.feature = -1
        self.threshold = 0.0
        self.n_left = 0


def _best_split(leaf: _GrowingLeaf, X: np.ndarray, y: np.ndarray,
                min_leaf: int) -> None:
    """Fill the leaf with its best admissible split, if any.

    Candidate scan is canonical (rows ordered by feature value with the
    target as secondary key), so the result does not depend on the order the
    training rows arrived in.
    """
    rows = leaf.rows
    n = len(rows)
    leaf.gain = -np.inf
    if n < 2 * min_leaf:
        return
    yr = y[rows]
    for j in range(X.shape[1]):
        xj = X[rows, j]
        order = np.lexsort((yr, xj))
        xs = xj[order]
        ys = yr[order]
        boundaries = np.nonzero(xs[1:] > xs[:-1])[0] + 1  # split before index i
        if len(boundaries) == 0:
            continue
        admissible = (boundaries >= min_leaf) & (boundaries <= n - min_leaf)
        boundaries = boundaries[admissible]
        if len(boundaries) == 0:
            continue
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum = csum[-1]
        total_sq = csq[-1]
        sse_parent = total_sq - total_sum * total_sum / n
        nl = boundaries.astype(float)
        sum_l = csum[boundaries - 1]
        sq_l = csq[boundaries - 1]
        sse_l = sq_l - sum_l * sum_l / nl
        sum_r = total_sum - sum_l
        sq_r = total_sq - sq_l
        sse_r = sq_r - sum_r * sum_r / (n - nl)
        gains = sse_parent - sse_l - sse_r
        best = int(np.argmax(gains))  # first occurrence wins: smallest threshold
        if gains[best] > leaf.gain:
            b = boundaries[best]
            leaf.gain = float(gains[best])
            leaf.feature = j
            leaf.threshold = float(0.5 * (xs[b - 1] + xs[b]))
            leaf.n_left = int(b)
            leaf.order = order


def fit_tree(features, targets, max_splits: int = 3,
             min_leaf: int = 1) -> RegressionTree:
    """Grow a least-squares regression tree with at most ``max_splits`` splits.

    Parameters
    ----------
    features : (n, d) array
    targets : (n,) array
    max_splits : int
        Total split-node budget; 0 yields a single mean-valued leaf.
    min_leaf : int
        Splits leaving fewer than this many samples on either side are
        inadmissible.

    Returns
    -------
    RegressionTree
        Zero-gain splits are never taken, so the tree may hold fewer than
        ``max_splits`` splits.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2:
        raise ValueError("features must be a 2-D array")
    if len(X) != len(y):
        raise ValueError("features and targets must have equal length")
    if len(y) == 0:
        raise EmptyTraining("cannot fit a tree on zero samples")
    if max_splits < 0:
        raise ValueError("max_splits must be >= 0")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")

    root = _GrowingLeaf(np.arange(len(y)))
    _best_split(root, X, y, min_leaf)
    leaves: list[_GrowingLeaf] = [root]  # creation order; never reordered
    children: dict[int, tuple] = {}      # id(leaf) -> (feature, thr, left, right)
    n_splits = 0
    while n_splits < max_splits:
        pick = None
        for leaf in leaves:
            if id(leaf) in children or leaf.gain <= 0:
                continue
            if pick is None or leaf.gain > pick.gain:
                pick = leaf
        if pick is None:
            break
        ordered_rows = pick.rows[pick.order]
        left = _GrowingLeaf(ordered_rows[:pick.n_left])
        right = _GrowingLeaf(ordered_rows[pick.n_left:])
        _best_split(left, X, y, min_leaf)
        _best_split(right, X, y, min_leaf)
        children[id(pick)] = (pick.feature, pick.threshold, left, right)
        leaves.append(left)
        leaves.append(right)
        n_splits += 1

    def build(leaf: _GrowingLeaf):
        if id(leaf) in children:
            feature, threshold, left, right = children[id(leaf)]
            return SplitNode(feature, threshold, build(left), build(right))
        return Leaf(value=float(np.mean(y[leaf.rows])), n=len(leaf.rows))

    return RegressionTree(
        root=build(root),
        n_splits=n_splits,
        max_splits=max_splits,
        min_leaf=min_leaf,
    )


def predict_tree(tree: RegressionTree, x) -> float | np.ndarray:
    """Value of the leaf reached by routing ``x`` (vector or row matrix)."""
    result = tree.predict(x)
    return float(result) if np.ndim(result) == 0 else result


def training_sse(tree: RegressionTree, features, targets) -> float:
    """Leaf-wise sum of squared errors of the tree on a dataset."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    total = 0.0
    stack = [(tree.root, np.arange(len(y)))]
    while stack:
        node, rows = stack.pop()
        if isinstance(node, Leaf):
            total += float(np.sum((y[rows] - node.value) ** 2))
        else:
            go_left = X[rows, node.feature_index] <= node.threshold
            stack.append((node.right, rows[~go_left]))
            stack.append((node.left, rows[go_left]))
    return total

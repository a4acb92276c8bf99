"""Array-backed binary decision trees and their growers.

Two growers share one node layout: a Gini classification grower (leaves hold
class-count histograms) and a second-order regression grower used by the
boosted trainer (leaves hold one Newton step, -G / (H + lambda)).
"""
from __future__ import annotations

import dataclasses
import functools

import numpy as np

LEAF = -1


@dataclasses.dataclass
class Tree:
    feature: np.ndarray    # int, LEAF for leaves
    threshold: np.ndarray  # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (n_nodes, n_outputs)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @functools.cached_property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always follow their parent
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        for _ in range(self.depth):
            f = self.feature[node]
            internal = f != LEAF
            if not internal.any():
                break
            go_left = X[rows, f] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        t = cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64),
        )
        t.validate()
        return t

    def validate(self) -> None:
        n = self.n_nodes
        if not (len(self.threshold) == len(self.left) == len(self.right) == len(self.value) == n):
            raise ValueError("tree arrays have inconsistent lengths")
        if n == 0:
            raise ValueError("empty tree")
        internal = self.feature != LEAF
        idx = np.flatnonzero(internal)
        if (self.left[idx] <= idx).any() or (self.right[idx] <= idx).any():
            raise ValueError("tree children must follow their parent")
        if (self.left[idx] >= n).any() or (self.right[idx] >= n).any():
            raise ValueError("tree child index out of range")
        if (self.feature[internal] < 0).any():
            raise ValueError("negative feature index")


class _Builder:
    def __init__(self, n_out: int):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []
        self.n_out = n_out

    def add(self, value: np.ndarray) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.feature) - 1

    def build(self) -> Tree:
        return Tree(
            np.asarray(self.feature, dtype=np.int64),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int64),
            np.asarray(self.right, dtype=np.int64),
            np.asarray(self.value, dtype=np.float64).reshape(-1, self.n_out),
        )


def _split_threshold(lo: float, hi: float) -> float:
    mid = lo + (hi - lo) / 2.0
    # adjacent floats: the midpoint can round up onto hi
    return mid if mid < hi else lo


def _candidate_features(rng: np.random.Generator, n_features: int, max_features: int):
    order = rng.permutation(n_features)
    return order[:max_features], order[max_features:]


def _best_gini_split(X, Y, idx, features, min_leaf):
    """Return (weighted child impurity, feature, threshold) or None."""
    n = len(idx)
    best = None
    pos = np.arange(1, n)  # left size for a cut after sorted position i
    nl = pos.astype(np.float64)
    nr = (n - pos).astype(np.float64)
    ok_size = (pos >= min_leaf) & (n - pos >= min_leaf)
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        if xs[0] == xs[-1]:
            continue
        cum = np.cumsum(Y[idx[order]], axis=0)
        total = cum[-1]
        left = cum[:-1]
        right = total - left
        # n_child * gini(child), summed over both children
        imp = (nl - (left * left).sum(axis=1) / nl) + (nr - (right * right).sum(axis=1) / nr)
        valid = ok_size & (xs[:-1] < xs[1:])
        if not valid.any():
            continue
        imp = np.where(valid, imp, np.inf)
        i = int(np.argmin(imp))
        if best is None or imp[i] < best[0]:
            best = (float(imp[i]), int(f), _split_threshold(float(xs[i]), float(xs[i + 1])))
    return best


def grow_classifier(X: np.ndarray, Y: np.ndarray, rng: np.random.Generator, *,
                    max_depth: int, min_leaf: int, max_features: int) -> Tree:
    """Grow a Gini tree on one-hot (possibly count-weighted) targets ``Y``."""
    n_features = X.shape[1]
    b = _Builder(Y.shape[1])
    root = b.add(Y.sum(axis=0))
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = b.value[node]
        n = len(idx)
        if depth >= max_depth or n < 2 * min_leaf or (counts > 0).sum() <= 1:
            continue
        parent_imp = n - (counts * counts).sum() / n
        first, rest = _candidate_features(rng, n_features, max_features)
        best = _best_gini_split(X, Y, idx, first, min_leaf)
        if best is None and len(rest):
            # keep drawing features until one can split, like most CART implementations
            for f in rest:
                best = _best_gini_split(X, Y, idx, [f], min_leaf)
                if best is not None:
                    break
        if best is None or best[0] >= parent_imp - 1e-12:
            continue
        _, f, thr = best
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        lnode = b.add(Y[li].sum(axis=0))
        rnode = b.add(Y[ri].sum(axis=0))
        b.feature[node], b.threshold[node] = f, thr
        b.left[node], b.right[node] = lnode, rnode
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return b.build()


def _best_newton_split(X, g, h, idx, features, lam, min_child_weight):
    best = None
    G, H = g[idx].sum(), h[idx].sum()
    parent = G * G / (H + lam)
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        if xs[0] == xs[-1]:
            continue
        gl = np.cumsum(g[idx[order]])[:-1]
        hl = np.cumsum(h[idx[order]])[:-1]
        gr, hr = G - gl, H - hl
        gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
        valid = (xs[:-1] < xs[1:]) & (hl >= min_child_weight) & (hr >= min_child_weight)
        if not valid.any():
            continue
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if best is None or gain[i] > best[0]:
            best = (float(gain[i]), int(f), _split_threshold(float(xs[i]), float(xs[i + 1])))
    return best


def grow_regressor(X: np.ndarray, g: np.ndarray, h: np.ndarray, rng: np.random.Generator, *,
                   max_depth: int, lam: float, gamma: float, min_child_weight: float,
                   max_features: int | None = None) -> Tree:
    """Grow a regression tree on gradient/hessian pairs.

    Split gain and leaf weights follow the second-order expansion of the
    loss with an L2 penalty ``lam`` on leaf weights and ``gamma`` per leaf.
    """
    n_features = X.shape[1]
    mf = n_features if max_features is None else max_features
    b = _Builder(1)

    def leaf_value(idx):
        return np.array([-g[idx].sum() / (h[idx].sum() + lam)])

    all_idx = np.arange(len(X))
    root = b.add(leaf_value(all_idx))
    stack = [(root, all_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2:
            continue
        features, _ = _candidate_features(rng, n_features, mf)
        best = _best_newton_split(X, g, h, idx, features, lam, min_child_weight)
        if best is None or 0.5 * best[0] - gamma <= 0:
            continue
        _, f, thr = best
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        lnode = b.add(leaf_value(li))
        rnode = b.add(leaf_value(ri))
        b.feature[node], b.threshold[node] = f, thr
        b.left[node], b.right[node] = lnode, rnode
        stack.append((rnode, ri, depth + 1))
        stack.append((lnode, li, depth + 1))
    return b.build()


class PackedForest:
    """All trees of a forest flattened into shared arrays for batch traversal."""

    def __init__(self, trees: list[Tree]):
        offsets = np.cumsum([0] + [t.n_nodes for t in trees])[:-1]
        self.roots = offsets.astype(np.int64)
        self.feature = np.concatenate([t.feature for t in trees])
        self.threshold = np.concatenate([t.threshold for t in trees])
        self.left = np.concatenate([np.where(t.feature != LEAF, t.left + o, LEAF)
                                    for t, o in zip(trees, offsets)])
        self.right = np.concatenate([np.where(t.feature != LEAF, t.right + o, LEAF)
                                     for t, o in zip(trees, offsets)])
        self.safe_feature = np.where(self.feature == LEAF, 0, self.feature)
        self.max_depth = max(t.depth for t in trees)
        self.n_trees = len(trees)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node (global index) per (tree, row)."""
        n = len(X)
        node = np.repeat(self.roots[:, None], n, axis=1)
        rows = np.broadcast_to(np.arange(n), node.shape)
        for _ in range(self.max_depth):
            internal = self.feature[node] != LEAF
            if not internal.any():
                break
            xv = X[rows, self.safe_feature[node]]
            nxt = np.where(xv <= self.threshold[node], self.left[node], self.right[node])
            node = np.where(internal, nxt, node)
        return node

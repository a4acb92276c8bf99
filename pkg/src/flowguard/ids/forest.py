"""Bootstrap-aggregated Gini trees with per-split feature subsampling."""
from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..errors import EmptyDataset, SchemaMismatch
from .dataset import LabeledDataset
from .trees import PackedForest, Tree, grow_classifier

FOREST_DEFAULTS = {
    "max_depth": 12,
    "min_leaf": 2,
    "max_features": "sqrt",
    "bootstrap": True,
}


def _resolve_max_features(spec, n_features: int) -> int:
    if spec in (None, "all"):
        return n_features
    if spec == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if spec == "log2":
        return max(1, int(math.log2(n_features)))
    if isinstance(spec, float) and 0 < spec <= 1:
        return max(1, int(round(spec * n_features)))
    return max(1, min(int(spec), n_features))


@dataclasses.dataclass
class ForestModel:
    classes: tuple[str, ...]
    trees: list[Tree]
    feature_names: tuple[str, ...]
    params: dict
    seed: int

    kind = "forest"

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        self._packed = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _leaf_distributions(self) -> np.ndarray:
        vals = np.concatenate([t.value for t in self.trees])
        totals = vals.sum(axis=1, keepdims=True)
        return vals / np.where(totals > 0, totals, 1.0)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean over trees of each tree's normalized leaf histogram."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatch(f"model expects {len(self.feature_names)} features, got {X.shape[1]}")
        if self._packed is None:
            self._packed = (PackedForest(self.trees), self._leaf_distributions())
        packed, dist = self._packed
        out = np.empty((len(X), len(self.classes)))
        chunk = max(1, 400_000 // packed.n_trees)
        for s in range(0, len(X), chunk):
            leaves = packed.apply(X[s:s + chunk])
            out[s:s + chunk] = dist[leaves].sum(axis=0) / packed.n_trees
        return out


def train_forest(d: LabeledDataset, n: int = 100, *, seed: int = 0, **params) -> ForestModel:
    if len(d) == 0:
        raise EmptyDataset("cannot train a forest on an empty dataset")
    if n < 1:
        raise ValueError("tree count must be at least 1")
    unknown = set(params) - set(FOREST_DEFAULTS)
    if unknown:
        raise TypeError(f"unknown forest parameters {sorted(unknown)}")
    p = {**FOREST_DEFAULTS, **params}
    mf = _resolve_max_features(p["max_features"], d.X.shape[1])
    Y = d.one_hot()
    children = np.random.SeedSequence(seed).spawn(n)
    trees = []
    for ss in children:
        rng = np.random.default_rng(ss)
        if p["bootstrap"]:
            idx = rng.integers(0, len(d), size=len(d))
            Xb, Yb = d.X[idx], Y[idx]
        else:
            Xb, Yb = d.X, Y
        trees.append(grow_classifier(Xb, Yb, rng, max_depth=int(p["max_depth"]),
                                     min_leaf=int(p["min_leaf"]), max_features=mf))
    return ForestModel(d.classes, trees, d.feature_names, p, seed)

"""Second-order gradient boosting on the multiclass logistic (softmax) loss.

Each stage fits one regression tree per class to the loss gradient and
hessian, with an L2 penalty on leaf weights. The stage weight is the
learning rate times a backtracking factor chosen so the training loss never
goes up; a stage that cannot reduce the loss is kept with weight zero.
"""
from __future__ import annotations

import dataclasses

import numpy as np

from ..errors import EmptyDataset, NonFiniteGradient, SchemaMismatch
from .dataset import LabeledDataset
from .trees import Tree, grow_regressor

BOOSTED_DEFAULTS = {
    "learning_rate": 0.3,
    "max_depth": 3,
    "reg_lambda": 1.0,
    "gamma": 0.0,
    "min_child_weight": 1e-3,
    "max_features": None,
    "variant": "xgb",
}

PRIOR_FLOOR = 1e-6
_BACKTRACK_STEPS = 10


def softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def log_loss(F: np.ndarray, y_idx: np.ndarray) -> float:
    Z = F - F.max(axis=1, keepdims=True)
    lse = np.log(np.exp(Z).sum(axis=1))
    return float(np.mean(lse - Z[np.arange(len(y_idx)), y_idx]))


@dataclasses.dataclass
class Stage:
    weight: float
    trees: list[Tree]  # one per class


@dataclasses.dataclass
class BoostedModel:
    classes: tuple[str, ...]
    base_score: np.ndarray
    stages: list[Stage]
    feature_names: tuple[str, ...]
    params: dict
    seed: int
    loss_history: list[float] = dataclasses.field(default_factory=list)

    kind = "boosted"

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatch(f"model expects {len(self.feature_names)} features, got {X.shape[1]}")
        F = np.tile(self.base_score, (len(X), 1))
        for st in self.stages:
            if st.weight == 0.0:
                continue
            for c, t in enumerate(st.trees):
                F[:, c] += st.weight * t.predict(X)[:, 0]
        return F

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.decision_function(X))


def train_boosted(d: LabeledDataset, stages: int = 50, *, seed: int = 0, **params) -> BoostedModel:
    if len(d) == 0:
        raise EmptyDataset("cannot boost on an empty dataset")
    if stages < 1:
        raise ValueError("stage count must be at least 1")
    unknown = set(params) - set(BOOSTED_DEFAULTS)
    if unknown:
        raise TypeError(f"unknown boosting parameters {sorted(unknown)}")
    p = {**BOOSTED_DEFAULTS, **params}
    lr = float(p["learning_rate"])
    if not 0 < lr <= 1:
        raise ValueError("learning rate must lie in (0, 1]")
    if not np.isfinite(d.X).all():
        raise NonFiniteGradient("feature matrix contains non-finite values")

    y_idx = d.y_index()
    Y = d.one_hot()
    C = len(d.classes)
    prior = Y.mean(axis=0)
    base = np.log(np.maximum(prior, PRIOR_FLOOR))
    base -= base.max()
    F = np.tile(base, (len(d), 1))
    loss = log_loss(F, y_idx)
    history = [loss]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB005]))
    fitted: list[Stage] = []
    for _ in range(stages):
        P = softmax(F)
        G = P - Y
        H = np.maximum(P * (1.0 - P), 1e-16)
        if not (np.isfinite(G).all() and np.isfinite(H).all()):
            raise NonFiniteGradient("gradient or hessian became non-finite")
        trees = [
            grow_regressor(d.X, G[:, c], H[:, c], rng, max_depth=int(p["max_depth"]),
                           lam=float(p["reg_lambda"]), gamma=float(p["gamma"]),
                           min_child_weight=float(p["min_child_weight"]),
                           max_features=p["max_features"])
            for c in range(C)
        ]
        step = np.column_stack([t.predict(d.X)[:, 0] for t in trees])
        weight, new_loss = lr, None
        for _ in range(_BACKTRACK_STEPS):
            cand = log_loss(F + weight * step, y_idx)
            if cand <= loss:
                new_loss = cand
                break
            weight /= 2.0
        if new_loss is None:
            weight, new_loss = 0.0, loss
        else:
            F = F + weight * step
        loss = new_loss
        history.append(loss)
        fitted.append(Stage(weight, trees))
    return BoostedModel(d.classes, base, fitted, d.feature_names, p, seed, history)

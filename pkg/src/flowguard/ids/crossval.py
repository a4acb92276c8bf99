from __future__ import annotations

import dataclasses
from collections import Counter
from typing import Callable

import numpy as np

from ..errors import ClassTooSmall
from .dataset import LabeledDataset


def stratified_folds(y, k: int, seed: int = 0) -> list[np.ndarray]:
    """Test-index arrays for k stratified folds.

    Rows of each class are shuffled and dealt round-robin, continuing the deal
    across classes, so per-class and total fold sizes differ by at most one.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    y = np.asarray([str(v) for v in y], dtype=object)
    counts = Counter(y.tolist())
    small = {c: n for c, n in counts.items() if n < k}
    if small:
        raise ClassTooSmall(f"classes with fewer than {k} rows: {small}")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for c in sorted(counts):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        for i in idx:
            buckets[pos % k].append(int(i))
            pos += 1
    return [np.sort(np.asarray(b, dtype=np.int64)) for b in buckets]


@dataclasses.dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    accuracy: float     # percent
    fpr: float | None   # fraction; None when the fold has no Normal rows


def cross_validate(d: LabeledDataset, k: int, fit: Callable[[LabeledDataset], object],
                   seed: int = 0) -> list[FoldResult]:
    """``fit(train)`` returns an object whose ``predict(X)`` yields labels."""
    from ..metrics import ConfusionMatrix, UndefinedFPR, confusion_metrics

    folds = stratified_folds(d.y, k, seed)
    out = []
    all_idx = np.arange(len(d))
    for i, test in enumerate(folds):
        train = np.setdiff1d(all_idx, test, assume_unique=True)
        model = fit(d.subset(train))
        pred = model.predict(d.X[test])
        if isinstance(pred, tuple):  # ensembles return (labels, scores)
            pred = pred[0]
        cm = ConfusionMatrix.from_labels(d.y[test], pred)
        try:
            m = confusion_metrics(cm)
            acc, fpr = m["accuracy"], m["fpr"]
        except UndefinedFPR:
            acc, fpr = cm.accuracy(), None
        out.append(FoldResult(i, len(train), len(test), acc, fpr))
    return out

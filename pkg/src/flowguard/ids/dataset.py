from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from ..errors import EmptyDataset, SchemaMismatch
from ..flow_engine import FEATURE_NAMES
from ..labels import SEVERITY_RANK


def canonical_classes(labels) -> tuple[str, ...]:
    """Known labels in enum-rank order (Normal first), unknown ones after, sorted."""
    seen = {str(v) for v in labels}
    known = sorted((c for c in seen if c in SEVERITY_RANK), key=lambda c: SEVERITY_RANK[c])
    return tuple(known) + tuple(sorted(seen - set(known)))


@dataclasses.dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray                      # str labels, one per row
    classes: tuple[str, ...]
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray([str(v) for v in self.y], dtype=object)
        self.classes = tuple(str(c) for c in self.classes)
        if self.X.ndim != 2:
            raise SchemaMismatch("feature matrix must be 2-D")
        if len(self.X) != len(self.y):
            raise SchemaMismatch(f"{len(self.X)} rows but {len(self.y)} labels")
        if self.X.shape[1] != len(self.feature_names):
            raise SchemaMismatch(
                f"{self.X.shape[1]} columns for {len(self.feature_names)} feature names")
        stray = set(self.y) - set(self.classes)
        if stray:
            raise SchemaMismatch(f"labels outside the class set: {sorted(stray)}")

    @classmethod
    def from_labels(cls, X, y: Sequence, classes=None, feature_names=FEATURE_NAMES):
        y = [str(v) for v in y]
        return cls(X, y, tuple(classes) if classes else canonical_classes(y), tuple(feature_names))

    def __len__(self) -> int:
        return len(self.y)

    def require_rows(self) -> None:
        if len(self) == 0:
            raise EmptyDataset("dataset has no rows")

    def y_index(self) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.classes)}
        return np.fromiter((lookup[v] for v in self.y), dtype=np.int64, count=len(self.y))

    def one_hot(self) -> np.ndarray:
        Y = np.zeros((len(self), len(self.classes)))
        Y[np.arange(len(self)), self.y_index()] = 1.0
        return Y

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.X[idx], self.y[idx], self.classes, self.feature_names)

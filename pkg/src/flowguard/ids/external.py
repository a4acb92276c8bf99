"""Models scored outside this package, e.g. a sequence network trained elsewhere.

Two forms are supported: a lookup table over binned features (loadable from a
model file) and an arbitrary scoring callable.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import SchemaMismatch


def _simplex_rows(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if (P < 0).any() or not np.isfinite(P).all():
        raise ValueError("probabilities must be finite and non-negative")
    s = P.sum(axis=-1, keepdims=True)
    if (s <= 0).any():
        raise ValueError("probability row sums to zero")
    return P / s


class ExternalModel:
    kind = "external-table"

    def __init__(self, identifier: str, classes: Sequence[str], feature_names: Sequence[str],
                 scorer: Callable[[np.ndarray], np.ndarray], table: dict | None = None):
        self.identifier = identifier
        self.classes = tuple(classes)
        self.feature_names = tuple(feature_names)
        self._scorer = scorer
        self.table = table

    @classmethod
    def from_function(cls, identifier, classes, feature_names, fn) -> "ExternalModel":
        return cls(identifier, classes, feature_names, fn)

    @classmethod
    def from_table(cls, identifier: str, classes: Sequence[str], feature_names: Sequence[str],
                   table: dict) -> "ExternalModel":
        """``table`` = {"features": [...], "edges": [[...], ...], "cells": {"i,j": probs},
        "default": probs}. Each listed feature is binned by ``np.searchsorted``
        on its edges (right side); the tuple of bin indices selects a cell."""
        names = list(feature_names)
        try:
            cols = [names.index(f) for f in table["features"]]
        except ValueError as exc:
            raise SchemaMismatch(str(exc)) from None
        edges = [np.asarray(e, dtype=np.float64) for e in table["edges"]]
        if len(edges) != len(cols):
            raise SchemaMismatch("one edge list is required per table feature")
        C = len(classes)
        default = _simplex_rows(np.asarray(table["default"], dtype=np.float64))
        cells = {}
        for k, v in table["cells"].items():
            key = tuple(int(i) for i in str(k).split(","))
            row = _simplex_rows(np.asarray(v, dtype=np.float64))
            if len(row) != C or len(key) != len(cols):
                raise SchemaMismatch(f"table cell {k!r} has the wrong shape")
            cells[key] = row
        if len(default) != C:
            raise SchemaMismatch("default row has the wrong width")

        def score(X: np.ndarray) -> np.ndarray:
            bins = np.column_stack([np.searchsorted(e, X[:, j], side="right")
                                    for e, j in zip(edges, cols)])
            out = np.empty((len(X), C))
            for i, b in enumerate(map(tuple, bins.tolist())):
                out[i] = cells.get(b, default)
            return out

        return cls(identifier, classes, feature_names, score, table)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatch(f"model expects {len(self.feature_names)} features, got {X.shape[1]}")
        P = np.asarray(self._scorer(X), dtype=np.float64)
        if P.shape != (len(X), len(self.classes)):
            raise SchemaMismatch(f"scorer returned shape {P.shape}")
        return _simplex_rows(P)

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..flow_engine import NormalizationStats, feature_matrix
from .fusion import EnsembleConfig, fuse_batch


class Ensemble:
    """Trained members, their fusion config and the normalizer they were fit with.

    Detection entry point for the simulator: raw flow features in,
    (label, score) per flow out.
    """

    def __init__(self, models: Sequence, cfg: EnsembleConfig | None = None,
                 normalizer: NormalizationStats | None = None):
        if cfg is None:
            cfg = EnsembleConfig.uniform([getattr(m, "identifier", f"{m.kind}{i}")
                                          for i, m in enumerate(models)])
        if len(cfg.members) != len(models):
            raise ValueError(f"{len(models)} models for {len(cfg.members)} configured members")
        self.models = list(models)
        self.cfg = cfg
        self.normalizer = normalizer

    @property
    def threshold(self) -> float:
        return self.cfg.threshold

    def member_outputs(self, Xn: np.ndarray) -> list[tuple[tuple[str, ...], np.ndarray]]:
        return [(m.classes, m.predict_proba(Xn)) for m in self.models]

    def predict(self, X: np.ndarray, normalized: bool = False) -> tuple[list[str], np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if not normalized and self.normalizer is not None:
            X = self.normalizer.transform(X)
        return fuse_batch(self.member_outputs(X), self.cfg)

    def detect(self, flows, X: np.ndarray | None = None) -> list[tuple[str, float]]:
        if X is None:
            X = feature_matrix(flows)
        if len(X) == 0:
            return []
        labels, scores = self.predict(X)
        return list(zip(labels, scores.tolist()))


def train_native_ensemble(d, *, trees: int = 100, stages: int = 50, seed: int = 0,
                          weights: dict | None = None, mode: str = "soft",
                          threshold: float = 0.5, forest_params: dict | None = None,
                          boosted_params: dict | None = None) -> Ensemble:
    """Forest + boosted members trained on z-scored features, fused per ``mode``."""
    from ..flow_engine import fit_normalizer
    from .boosted import train_boosted
    from .dataset import LabeledDataset
    from .forest import train_forest
    from .fusion import Member

    d.require_rows()
    norm = fit_normalizer(d.X, d.feature_names)
    dn = LabeledDataset(norm.transform(d.X), d.y, d.classes, d.feature_names)
    forest = train_forest(dn, trees, seed=seed, **(forest_params or {}))
    boosted = train_boosted(dn, stages, seed=seed + 1, **(boosted_params or {}))
    weights = weights or {"forest": 0.5, "boosted": 0.5}
    cfg = EnsembleConfig([Member("forest", float(weights.get("forest", 0.0))),
                          Member("boosted", float(weights.get("boosted", 0.0)))], mode, threshold)
    return Ensemble([forest, boosted], cfg, norm)

"""Tree-ensemble intrusion detection: training, fusion, alert gating."""
from .boosted import BoostedModel, train_boosted
from .crossval import FoldResult, cross_validate, stratified_folds
from .dataset import LabeledDataset
from .ensemble import Ensemble, train_native_ensemble
from .external import ExternalModel
from .forest import ForestModel, train_forest
from .fusion import (
    HARD,
    SOFT,
    Alert,
    ClassProbabilities,
    EnsembleConfig,
    Member,
    decide,
    fuse,
    fuse_batch,
)
from .persist import load_model, save_model


def predict_proba(model, x) -> ClassProbabilities:
    """Single-row prediction as a :class:`ClassProbabilities`."""
    P = model.predict_proba([x] if getattr(x, "ndim", 1) == 1 else x)
    return ClassProbabilities.from_array(model.classes, P[0])


__all__ = [
    "Alert", "BoostedModel", "ClassProbabilities", "Ensemble", "EnsembleConfig",
    "ExternalModel", "FoldResult", "ForestModel", "HARD", "LabeledDataset", "Member", "SOFT",
    "cross_validate", "decide", "fuse", "fuse_batch", "load_model", "predict_proba",
    "save_model", "stratified_folds", "train_boosted", "train_forest", "train_native_ensemble",
]

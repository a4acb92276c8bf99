"""JSON model files.

Envelope fields: ``format``, ``schema_version``, ``kind``, ``feature_schema``,
``classes``, ``hyperparameters`` plus kind-specific payload. Floats are
written with ``repr`` precision, so a load/save round trip is bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import CorruptModelFile, SchemaMismatch
from ..flow_engine import FEATURE_NAMES, NormalizationStats
from .boosted import BoostedModel, Stage
from .ensemble import Ensemble
from .external import ExternalModel
from .forest import ForestModel
from .fusion import EnsembleConfig, Member
from .trees import Tree

FORMAT = "flowguard-model"
SCHEMA_VERSION = 1


def model_to_dict(m) -> dict:
    if isinstance(m, Ensemble):
        return {
            "kind": "ensemble",
            "feature_schema": list(m.models[0].feature_names),
            "classes": sorted({c for mm in m.models for c in mm.classes}),
            "hyperparameters": {"mode": m.cfg.mode, "threshold": m.cfg.threshold},
            "weights": {mem.name: mem.weight for mem in m.cfg.members},
            "member_order": [mem.name for mem in m.cfg.members],
            "members": [model_to_dict(mm) for mm in m.models],
            "normalizer": m.normalizer.to_dict() if m.normalizer is not None else None,
        }
    base = {"feature_schema": list(m.feature_names), "classes": list(m.classes)}
    if isinstance(m, ForestModel):
        return {**base, "kind": "forest", "hyperparameters": {**m.params, "n_trees": m.n_trees},
                "seed": m.seed, "trees": [t.to_dict() for t in m.trees]}
    if isinstance(m, BoostedModel):
        return {**base, "kind": "boosted", "hyperparameters": m.params, "seed": m.seed,
                "base_score": m.base_score.tolist(), "loss_history": m.loss_history,
                "stages": [{"weight": s.weight, "trees": [t.to_dict() for t in s.trees]}
                           for s in m.stages]}
    if isinstance(m, ExternalModel):
        if m.table is None:
            raise TypeError("function-backed external models cannot be saved")
        return {**base, "kind": "external-table", "hyperparameters": {},
                "identifier": m.identifier, "table": m.table}
    raise TypeError(f"cannot serialise {type(m).__name__}")


def model_from_dict(d: dict):
    kind = d["kind"]
    names = tuple(d["feature_schema"])
    if kind == "ensemble":
        members = [model_from_dict(x) for x in d["members"]]
        hp = d["hyperparameters"]
        cfg = EnsembleConfig([Member(n, float(d["weights"][n])) for n in d["member_order"]],
                             hp["mode"], float(hp["threshold"]))
        norm = NormalizationStats.from_dict(d["normalizer"]) if d.get("normalizer") else None
        return Ensemble(members, cfg, norm)
    classes = tuple(d["classes"])
    if kind == "forest":
        hp = dict(d["hyperparameters"])
        hp.pop("n_trees", None)
        return ForestModel(classes, [Tree.from_dict(t) for t in d["trees"]], names, hp,
                           int(d["seed"]))
    if kind == "boosted":
        stages = [Stage(float(s["weight"]), [Tree.from_dict(t) for t in s["trees"]])
                  for s in d["stages"]]
        return BoostedModel(classes, np.asarray(d["base_score"], dtype=np.float64), stages,
                            names, dict(d["hyperparameters"]), int(d["seed"]),
                            list(d.get("loss_history", [])))
    if kind == "external-table":
        return ExternalModel.from_table(d["identifier"], classes, names, d["table"])
    raise CorruptModelFile(f"unknown model kind {kind!r}")


def dumps_model(m, extra: dict | None = None) -> str:
    doc = {"format": FORMAT, "schema_version": SCHEMA_VERSION, **model_to_dict(m)}
    if extra:
        doc["meta"] = extra
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def save_model(m, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.write_text(dumps_model(m, extra) + "\n")
    return path


def loads_model(text: str, expect_features=None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModelFile(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CorruptModelFile("not a flowguard model file")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise CorruptModelFile(f"unsupported schema version {doc.get('schema_version')!r}")
    if expect_features is not None and tuple(doc.get("feature_schema", ())) != tuple(expect_features):
        raise SchemaMismatch("model feature schema differs from the expected one")
    try:
        return model_from_dict(doc)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptModelFile(f"malformed model file: {exc}") from None


def load_model(path, expect_features=FEATURE_NAMES):
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise CorruptModelFile(str(exc)) from None
    return loads_model(text, expect_features)

"""Weighted ensemble fusion and the alert gate."""
from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from ..errors import EmptyEnsemble, SchemaMismatch
from ..labels import NORMAL, severity_rank

SOFT = "soft"
HARD = "hard"
DEFAULT_THRESHOLD = 0.5


@dataclasses.dataclass(frozen=True)
class ClassProbabilities:
    classes: tuple[str, ...]
    p: tuple[float, ...]

    def __post_init__(self):
        if len(self.classes) != len(self.p):
            raise SchemaMismatch("one probability per class is required")
        if any(not 0.0 <= v <= 1.0 for v in self.p) or abs(sum(self.p) - 1.0) > 1e-9:
            raise ValueError(f"not a probability simplex: {self.p}")

    @classmethod
    def from_array(cls, classes, p) -> "ClassProbabilities":
        return cls(tuple(classes), tuple(float(v) for v in p))

    def get(self, c: str) -> float:
        try:
            return self.p[self.classes.index(c)]
        except ValueError:
            return 0.0

    def argmax(self) -> tuple[str, float]:
        return pick_label(dict(zip(self.classes, self.p)))


@dataclasses.dataclass
class Member:
    name: str
    weight: float = 1.0


@dataclasses.dataclass
class EnsembleConfig:
    members: list[Member]
    mode: str = SOFT
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.mode not in (SOFT, HARD):
            raise ValueError(f"fusion mode must be 'soft' or 'hard', not {self.mode!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("voting threshold must lie in [0, 1]")
        if any(m.weight < 0 for m in self.members):
            raise ValueError("member weights must be non-negative")

    @classmethod
    def uniform(cls, names: Sequence[str], mode: str = SOFT, threshold: float = DEFAULT_THRESHOLD):
        return cls([Member(n, 1.0) for n in names], mode, threshold)

    def weights(self) -> list[float]:
        if not self.members:
            raise EmptyEnsemble("ensemble has no members")
        total = sum(m.weight for m in self.members)
        if total <= 0:
            raise ValueError("member weights sum to zero")
        return [m.weight / total for m in self.members]


def tie_key(label: str, score: float):
    return (score, severity_rank(label))


def pick_label(scores: dict[str, float]) -> tuple[str, float]:
    """Argmax; exact ties go to the most severe label, then to the earliest key."""
    best = None
    for c, s in scores.items():
        if best is None or tie_key(c, s) > tie_key(*best):
            best = (c, s)
    return best


def _union_classes(per_model: Sequence[ClassProbabilities]) -> list[str]:
    out: list[str] = []
    for cp in per_model:
        for c in cp.classes:
            if c not in out:
                out.append(c)
    return out


def fuse(per_model: Sequence[ClassProbabilities], cfg: EnsembleConfig) -> tuple[str, float]:
    if not per_model:
        raise EmptyEnsemble("no member outputs to fuse")
    w = cfg.weights()
    if len(w) != len(per_model):
        raise SchemaMismatch(f"{len(per_model)} outputs for {len(w)} configured members")
    classes = _union_classes(per_model)
    acc = {c: 0.0 for c in classes}
    if cfg.mode == SOFT:
        for wm, cp in zip(w, per_model):
            for c in classes:
                acc[c] += wm * cp.get(c)
    else:
        for wm, cp in zip(w, per_model):
            lab, _ = cp.argmax()
            acc[lab] += wm
    return pick_label(acc)


def _rank_order(classes: Sequence[str]) -> np.ndarray:
    """Column order putting the most severe label first, for first-max tie breaks."""
    return np.array(sorted(range(len(classes)), key=lambda i: -severity_rank(classes[i])))


def fuse_batch(per_model: Sequence[tuple[Sequence[str], np.ndarray]],
               cfg: EnsembleConfig) -> tuple[list[str], np.ndarray]:
    """Vectorized :func:`fuse` over rows; members given as (classes, (n, C) matrix)."""
    if not per_model:
        raise EmptyEnsemble("no member outputs to fuse")
    w = cfg.weights()
    if len(w) != len(per_model):
        raise SchemaMismatch(f"{len(per_model)} outputs for {len(w)} configured members")
    classes: list[str] = []
    for cls_, _ in per_model:
        for c in cls_:
            if c not in classes:
                classes.append(c)
    n = len(per_model[0][1])
    col = {c: i for i, c in enumerate(classes)}
    acc = np.zeros((n, len(classes)))
    for wm, (cls_, P) in zip(w, per_model):
        P = np.asarray(P, dtype=np.float64)
        idx = [col[c] for c in cls_]
        if cfg.mode == SOFT:
            acc[:, idx] += wm * P
        else:
            order = _rank_order(cls_)
            win = order[np.argmax(P[:, order], axis=1)]
            np.add.at(acc, (np.arange(n), np.asarray(idx)[win]), wm)
    order = _rank_order(classes)
    best = order[np.argmax(acc[:, order], axis=1)]
    labels = [classes[i] for i in best]
    return labels, acc[np.arange(n), best]


@dataclasses.dataclass(frozen=True)
class Alert:
    flow_id: str
    label: str
    confidence: float
    timestamp: float


def decide(fused: tuple[str, float], threshold: float, flow_id: str, now: float) -> Alert | None:
    label, score = fused
    if not 0.0 <= score <= 1.0 + 1e-12:
        raise ValueError(f"fused score {score} outside [0, 1]")
    if label != NORMAL and score > threshold:
        return Alert(flow_id, str(label), float(score), float(now))
    return None

import random

import numpy as np
import pytest

from flowguard.errors import EmptyEnsemble, SchemaMismatch
from flowguard.ids import HARD, SOFT, ClassProbabilities, EnsembleConfig, Member, decide, fuse, fuse_batch
from oracles import fusion_oracle, random_simplex, weight_grids

CLASSES = ["Normal", "DDoS", "Probe", "Web"]


@pytest.mark.parametrize("mode", [SOFT, HARD])
def test_fusion_matches_exhaustive_oracle(mode):
    rng = random.Random(7)
    checked = 0
    for m in (1, 2, 3):
        for k in (2, 3, 4):
            classes = CLASSES[:k]
            for ws in weight_grids(m):
                for trial in range(2):
                    per = [ClassProbabilities(tuple(classes), tuple(random_simplex(rng, k, ties=trial == 1)))
                           for _ in range(m)]
                    cfg = EnsembleConfig([Member(f"m{i}", w) for i, w in enumerate(ws)], mode)
                    assert fuse(per, cfg) == fusion_oracle(per, ws, mode)
                    labels, scores = fuse_batch([(cp.classes, np.array([cp.p])) for cp in per], cfg)
                    assert (labels[0], float(scores[0])) == fusion_oracle(per, ws, mode)
                    checked += 1
    assert checked > 500


def test_tie_goes_to_more_severe_label():
    cp = ClassProbabilities(("Normal", "DDoS"), (0.5, 0.5))
    assert fuse([cp], EnsembleConfig.uniform(["a"])) == ("DDoS", 0.5)
    a = ClassProbabilities(("Normal", "Probe"), (1.0, 0.0))
    b = ClassProbabilities(("Normal", "Probe"), (0.0, 1.0))
    assert fuse([a, b], EnsembleConfig.uniform(["a", "b"], HARD))[0] == "Probe"


def test_members_with_different_class_sets():
    a = ClassProbabilities(("Normal", "DDoS"), (0.2, 0.8))
    b = ClassProbabilities(("Normal", "Probe"), (0.3, 0.7))
    label, score = fuse([a, b], EnsembleConfig.uniform(["a", "b"]))
    assert (label, score) == ("DDoS", 0.4)


def test_weights_normalize():
    cfg = EnsembleConfig([Member("a", 2.0), Member("b", 6.0)])
    assert cfg.weights() == [0.25, 0.75]
    with pytest.raises(EmptyEnsemble):
        EnsembleConfig([]).weights()
    with pytest.raises(ValueError):
        EnsembleConfig([Member("a", -1.0)])


def test_fuse_rejects_member_count_mismatch():
    cp = ClassProbabilities(("Normal",), (1.0,))
    with pytest.raises(SchemaMismatch):
        fuse([cp, cp], EnsembleConfig.uniform(["a"]))
    with pytest.raises(EmptyEnsemble):
        fuse([], EnsembleConfig.uniform(["a"]))


def test_class_probabilities_validate():
    with pytest.raises(ValueError):
        ClassProbabilities(("a", "b"), (0.7, 0.7))
    with pytest.raises(SchemaMismatch):
        ClassProbabilities(("a",), (0.5, 0.5))


def test_decide_is_strict_and_ignores_normal():
    assert decide(("DDoS", 0.5), 0.5, "f", 1.0) is None
    a = decide(("DDoS", 0.51), 0.5, "f", 1.0)
    assert a.label == "DDoS" and a.confidence == 0.51 and a.flow_id == "f"
    assert decide(("Normal", 0.99), 0.5, "f", 1.0) is None
    with pytest.raises(ValueError):
        decide(("DDoS", 1.5), 0.5, "f", 1.0)

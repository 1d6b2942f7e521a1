import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmkcf.eval_metrics import accuracy, contingency, evaluate, hungarian, nmi, purity


def brute_force_accuracy(truth, pred):
    """Best match over every injective map from predicted to true labels."""
    t_ids, p_ids = sorted(set(truth)), sorted(set(pred))
    best = 0
    slots = t_ids + [None] * max(0, len(p_ids) - len(t_ids))
    for perm in itertools.permutations(slots, len(p_ids)):
        mapping = dict(zip(p_ids, perm))
        best = max(best, sum(mapping[p] == t for t, p in zip(truth, pred)))
    return best / len(truth)


def nmi_by_hand(truth, pred):
    n = len(truth)
    def H(x):
        return -sum(c / n * math.log(c / n) for c in np.unique(x, return_counts=True)[1])
    mi = 0.0
    for a in set(truth):
        for b in set(pred):
            nab = sum(1 for t, p in zip(truth, pred) if t == a and p == b)
            if nab:
                na, nb = truth.count(a), pred.count(b)
                mi += nab / n * math.log(n * nab / (na * nb))
    return mi / max(H(truth), H(pred))


labelings = st.integers(1, 4).flatmap(
    lambda c: st.lists(st.integers(0, c), min_size=2, max_size=9)
)


def test_hungarian_square_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        C = rng.random((5, 5))
        pairs = hungarian(C)
        got = sum(C[i, j] for i, j in pairs)
        best = min(sum(C[i, p[i]] for i in range(5)) for p in itertools.permutations(range(5)))
        assert len(pairs) == 5
        assert got == pytest.approx(best, abs=1e-12)


def test_hungarian_rectangular():
    C = np.array([[3.0, 1.0, 2.0], [1.0, 5.0, 4.0]])
    pairs = hungarian(C)
    assert sorted(pairs) == [(0, 1), (1, 0)]


def test_accuracy_examples():
    assert accuracy([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert accuracy([0, 0, 1, 1], [0, 1, 0, 1]) == 0.5
    assert accuracy([0, 0, 0, 1], [0, 0, 0, 0]) == 0.75
    assert accuracy([0, 1, 2], [0, 0, 0]) == pytest.approx(1 / 3)


@settings(max_examples=80, deadline=None)
@given(data=st.data())
def test_accuracy_matches_permutation_oracle(data):
    truth = data.draw(labelings)
    pred = data.draw(st.lists(st.integers(0, 3), min_size=len(truth), max_size=len(truth)))
    assert accuracy(truth, pred) == pytest.approx(brute_force_accuracy(truth, pred), abs=1e-12)


def test_nmi_examples():
    assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0, abs=1e-12)
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)
    assert nmi([0, 0, 0], [0, 0, 0]) == 1.0
    assert nmi([0, 0, 0], [0, 1, 2]) == 0.0
    assert nmi([0, 1, 2], [0, 0, 0]) == 0.0


@settings(max_examples=80, deadline=None)
@given(data=st.data())
def test_nmi_matches_hand_formula(data):
    truth = data.draw(labelings)
    pred = data.draw(st.lists(st.integers(0, 3), min_size=len(truth), max_size=len(truth)))
    if len(set(truth)) == 1 and len(set(pred)) == 1:
        return
    assert nmi(truth, pred) == pytest.approx(nmi_by_hand(truth, pred), abs=1e-12)


def test_purity_examples():
    assert purity([0, 0, 1, 1], [0, 0, 0, 0]) == 0.5
    assert purity([0, 0, 1, 1], [0, 1, 2, 3]) == 1.0
    assert purity([0, 1, 1, 2, 2, 2], [0, 0, 0, 1, 1, 1]) == pytest.approx(5 / 6)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_invariances(data):
    truth = data.draw(labelings)
    pred = data.draw(st.lists(st.integers(0, 3), min_size=len(truth), max_size=len(truth)))
    relabel = {0: 7, 1: 3, 2: 11, 3: 5}
    renamed = [relabel[p] for p in pred]
    base = evaluate(truth, pred)
    for key, v in evaluate(truth, renamed).as_dict().items():
        assert v == pytest.approx(base.as_dict()[key], abs=1e-12)
    assert nmi(pred, truth) == pytest.approx(base.nmi, abs=1e-12)
    assert accuracy(pred, truth) == pytest.approx(base.acc, abs=1e-12)
    for v in base.as_dict().values():
        assert 0.0 <= v <= 1.0
    assert base.acc <= base.purity + 1e-12


def test_contingency_and_errors():
    np.testing.assert_array_equal(contingency(["a", "a", "b"], [5, 6, 6]), [[1, 1], [0, 1]])
    with pytest.raises(ValueError):
        accuracy([0, 1], [0])
    with pytest.raises(ValueError):
        nmi([], [])

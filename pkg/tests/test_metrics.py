import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from linshift.errors import DataError
from linshift.metrics import MetricsReport, auc, confusion, evaluate
from oracles import brute_auc


def test_confusion_hand_case():
    r = confusion([1, 1, 0, 0], [1, 0, 0, 0])
    assert (r.tpr, r.tnr, r.balanced_accuracy, r.accuracy) == (0.5, 1.0, 0.75, 0.75)
    assert r.counts == (1, 0, 2, 1)


def test_confusion_perfect_and_inverted():
    y = [1, 0, 1, 1, 0]
    good = confusion(y, y)
    assert (good.accuracy, good.tpr, good.tnr, good.balanced_accuracy) == (1.0, 1.0, 1.0, 1.0)
    bad = confusion(y, [1 - v for v in y])
    assert (bad.accuracy, bad.tpr, bad.tnr, bad.balanced_accuracy) == (0.0, 0.0, 0.0, 0.0)


def test_single_class_rates_are_missing():
    r = confusion([1, 1, 1], [1, 0, 1])
    assert r.tpr == pytest.approx(2 / 3)
    assert r.tnr is None and r.balanced_accuracy is None
    assert r.csv_row().split(",")[2] == ""


def test_enumerated_small_cases():
    for n in range(1, 7):
        for labels in itertools.product([0, 1], repeat=n):
            for preds in itertools.product([0, 1], repeat=n):
                r = confusion(labels, preds)
                tp = sum(a == 1 and b == 1 for a, b in zip(labels, preds))
                fn = sum(a == 1 and b == 0 for a, b in zip(labels, preds))
                tn = sum(a == 0 and b == 0 for a, b in zip(labels, preds))
                fp = sum(a == 0 and b == 1 for a, b in zip(labels, preds))
                assert r.counts == (tp, fp, tn, fn)
                assert sum(r.counts) == n
                assert r.accuracy == (tp + tn) / n
                if tp + fn and tn + fp:
                    assert r.tpr == tp / (tp + fn) and r.tnr == tn / (tn + fp)
                    assert r.balanced_accuracy == (r.tpr + r.tnr) / 2


def test_auc_examples():
    assert auc([1, 1, 0, 0], [0.9, 0.8, 0.2, 0.1]) == 1.0
    assert auc([1, 0, 1, 0], [0.3] * 4) == 0.5
    assert auc([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.6]) == 0.75


def test_auc_single_class():
    with pytest.raises(DataError):
        auc([1, 1], [0.1, 0.2])


def test_auc_matches_brute_force_exactly():
    rng = np.random.default_rng(0)
    for _ in range(400):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        # coarse scores force plenty of ties
        scores = rng.integers(0, int(rng.integers(2, 12)), n) / 7.0
        assert auc(labels, scores) == brute_auc(labels, scores)


labels_st = st.lists(st.sampled_from([0, 1]), min_size=2, max_size=40).filter(lambda v: 0 < sum(v) < len(v))


@given(labels_st, st.data())
def test_auc_monotone_invariance(labels, data):
    # integer scores keep both transforms strictly increasing in floating point
    scores = np.array(data.draw(st.lists(st.integers(-20, 20), min_size=len(labels), max_size=len(labels))), float)
    assert auc(labels, np.exp(scores)) == auc(labels, scores)
    assert auc(labels, 3 * scores + 1) == auc(labels, scores)


@given(labels_st, st.data())
def test_auc_reversal(labels, data):
    scores = data.draw(st.lists(st.floats(-5, 5), min_size=len(labels), max_size=len(labels), unique=True))
    assert auc(labels, scores) + auc(labels, -np.array(scores)) == pytest.approx(1.0, abs=1e-15)


@given(labels_st, st.data())
def test_confusion_permutation_invariant(labels, data):
    preds = data.draw(st.lists(st.sampled_from([0, 1]), min_size=len(labels), max_size=len(labels)))
    perm = data.draw(st.permutations(range(len(labels))))
    a = confusion(labels, preds)
    b = confusion([labels[i] for i in perm], [preds[i] for i in perm])
    assert a == b


def test_report_serialization():
    r = evaluate([1, 0, 1, 0], [1, 0, 0, 0], [0.9, 0.8, 0.7, 0.6])
    assert r.auc == 0.75
    d = r.to_dict()
    assert set(d) == {"accuracy", "tpr", "tnr", "auc", "balanced_accuracy", "tp", "fp", "tn", "fn"}
    assert MetricsReport(**d) == r
    assert len(r.csv_row().split(",")) == len(r.csv_header().split(","))


def test_length_mismatch():
    with pytest.raises(DataError):
        confusion([0, 1], [0])

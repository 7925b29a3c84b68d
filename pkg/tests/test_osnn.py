import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lord.data import UNKNOWN, SampleSet, toy_benchmark
from lord.osnn import fit_osnn, score_osnn
from lord.strategy import apply_strategy


def view(points, labels, kind="baseline"):
    return apply_strategy(SampleSet(np.asarray(points, dtype=float), labels), kind)


def test_ratio_between_two_classes():
    m = fit_osnn(view([[0, 0], [1, 0]], ["A", "B"]))
    s = score_osnn(m, [0.25, 0])
    assert s.predicted_label == "A"
    assert s.ratio == pytest.approx(1 / 3)


def test_query_on_training_point():
    m = fit_osnn(view([[0, 0], [1, 0]], ["A", "B"]))
    s = score_osnn(m, [0, 0])
    assert (s.predicted_label, s.ratio, s.confidence) == ("A", 0.0, 1.0)


def test_kvr_nearest_unknown_rejects():
    m = fit_osnn(view([[0, 0], [1, 0], [5, 5]], ["A", "B", "u"], "kvr"))
    s = score_osnn(m, [5, 4.9])
    assert s.predicted_label == UNKNOWN and s.ratio == 1.0


def test_spl_pseudo_prediction_maps_to_unknown():
    m = fit_osnn(view([[0, 0], [1, 0], [5, 5]], ["A", "B", "u"], "spl"))
    assert score_osnn(m, [5, 5.1]).predicted_label == UNKNOWN


def test_single_class_is_rejected():
    with pytest.raises(ValueError):
        fit_osnn(view([[0, 0], [1, 0]], ["A", "A"]))


def test_kvr_one_class_with_negatives():
    m = fit_osnn(view([[0, 0], [0.2, 0], [3, 3], [4, 4], [5, 5]], ["A", "A", "u", "u", "u"],
                      "kvr"))
    assert score_osnn(m, [0.1, 0]).predicted_label == "A"


def test_baseline_stores_all_samples():
    ds = toy_benchmark(per_class=20)
    v = apply_strategy(ds.train, "baseline")
    assert len(fit_osnn(v).view) == int(np.sum(~ds.train.unknown_mask))


def test_ties_resolve_to_lowest_index():
    m = fit_osnn(view([[1, 0], [-1, 0], [0, 5]], ["A", "B", "C"]))
    assert score_osnn(m, [0, 0]).predicted_label == "A"


def test_baseline_equals_spl_without_unknowns():
    rng = np.random.default_rng(0)
    X, labels = rng.normal(size=(12, 2)), ["a", "b", "c"] * 4
    q = rng.normal(size=(20, 2))
    a = fit_osnn(view(X, labels)).score(q)
    b = fit_osnn(view(X, labels, "spl")).score(q)
    assert np.array_equal(a.known, b.known) and list(a.predicted) == list(b.predicted)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 1000), c=st.floats(0.01, 100))
def test_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10, 3))
    labels = list(rng.choice(["a", "b", "u"], 10))
    labels[:2] = ["a", "b"]
    q = rng.normal(size=(5, 3))
    m1 = fit_osnn(view(X, labels, "kvr"))
    m2 = fit_osnn(view(X * c, labels, "kvr"))
    for row in q:
        s1, s2 = score_osnn(m1, row), score_osnn(m2, row * c)
        assert s1.predicted_label == s2.predicted_label
        assert s1.ratio == pytest.approx(s2.ratio, rel=1e-9, abs=1e-12)

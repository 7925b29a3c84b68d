import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lord.data import UNKNOWN, SampleSet
from lord.strategy import Pseudo, StrategyKind, apply_strategy, map_prediction


@pytest.fixture
def train():
    labels = ["a", "u", "b", "u", "a", "u", "b"]
    return SampleSet(np.arange(14.0).reshape(7, 2), labels)


def test_spl_adds_one_pseudo_class(train):
    v = apply_strategy(train, "spl")
    assert v.positive_classes == ("a", "b", Pseudo(0))
    assert len(v) == 7


def test_mpl_adds_one_class_per_unknown_in_order(train):
    v = apply_strategy(train, "mpl")
    assert len(v.positive_classes) == 5
    assert [l for l in v.labels if isinstance(l, Pseudo)] == [Pseudo(0), Pseudo(1), Pseudo(2)]
    assert v.labels[1] == Pseudo(0) and v.labels[5] == Pseudo(2)


def test_kvr_fills_negative_pool(train):
    v = apply_strategy(train, "kvr")
    assert v.positive_classes == ("a", "b")
    assert list(v.negative_pool) == [1, 3, 5]


def test_baseline_drops_unknowns(train):
    v = apply_strategy(train, "baseline")
    assert len(v) == 4 and UNKNOWN not in v.labels


def test_degrades_without_unknowns(caplog):
    s = SampleSet(np.zeros((2, 1)), ["a", "b"])
    v = apply_strategy(s, "kvr")
    assert v.kind is StrategyKind.BASELINE and v.degraded
    assert "degrades" in caplog.text


def test_unknown_strategy_name():
    with pytest.raises(ValueError):
        StrategyKind.parse("ovr")


def test_map_prediction(train):
    v = apply_strategy(train, "mpl")
    assert map_prediction(v, Pseudo(2)) == UNKNOWN
    assert map_prediction(v, "a") == "a"
    with pytest.raises(ValueError):
        map_prediction(v, "zzz")


def test_pseudo_labels_never_collide_with_class_names():
    s = SampleSet(np.zeros((3, 1)), ["<pseudo:0>", "b", "u"])
    v = apply_strategy(s, "spl")
    assert len(set(v.positive_classes)) == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c", "u"]), min_size=2, max_size=30))
def test_known_rows_identical_in_every_view(labels):
    if all(l == "u" for l in labels):
        labels = ["a"] + labels
    rng = np.random.default_rng(len(labels))
    s = SampleSet(rng.normal(size=(len(labels), 2)), labels)
    kc_mask = ~s.unknown_mask
    for kind in StrategyKind:
        v = apply_strategy(s, kind)
        mask = np.array([l in v.known_classes for l in v.labels], dtype=bool)
        assert v.X[mask].tobytes() == s.X[kc_mask].tobytes()
        for raw in set(v.labels):
            assert map_prediction(v, raw) in set(v.known_classes) | {UNKNOWN}
        again = apply_strategy(s, kind)
        assert again.labels == v.labels

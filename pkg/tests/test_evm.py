import numpy as np
import pytest
from sklearn.cluster import DBSCAN

from lord.data import UNKNOWN, SampleSet, toy_benchmark
from lord.evm import (NOISE, EvmConfig, cevm_reduce, confidence_raster, dbscan, export_raster,
                      fit_evm)
from lord.mixup import MixupConfig, centroid_stats, generate_mixups
from lord.strategy import Pseudo, apply_strategy


@pytest.fixture(scope="module")
def toy():
    return toy_benchmark(seed=0)


def two_blobs(n=20, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 0.3, (n, 2)), rng.normal(8, 0.3, (n, 2))])
    return SampleSet(X, ["a"] * n + ["b"] * n)


def test_dbscan_two_clusters():
    labels = dbscan([0, 0.1, 0.2, 10, 10.1], eps=0.5, min_pts=2)
    assert list(labels) == [0, 0, 0, 1, 1]


def test_dbscan_single_point_is_noise():
    assert list(dbscan([[1.0, 1.0]], 0.5, 2)) == [NOISE]


def test_dbscan_one_cluster_when_all_close():
    assert set(dbscan(np.random.default_rng(0).uniform(0, 0.1, (10, 2)), 1.0, 10)) == {0}


@pytest.mark.parametrize("seed", range(5))
def test_dbscan_matches_sklearn_partition(seed):
    X = np.random.default_rng(seed).normal(size=(80, 2))
    ours = dbscan(X, 0.35, 4)
    ref = DBSCAN(eps=0.35, min_samples=4).fit(X)
    assert np.array_equal(ours == NOISE, ref.labels_ == -1)
    core = ref.core_sample_indices_
    # core points are grouped identically (border ties may differ in principle)
    for i in core:
        for j in core:
            assert (ours[i] == ours[j]) == (ref.labels_[i] == ref.labels_[j])


def test_anchor_inclusion_at_itself_is_one():
    s = two_blobs()
    m = fit_evm(apply_strategy(s, "baseline"), EvmConfig(tail_size=10))
    for ev in m.anchors.values():
        from lord.base import pairwise_distances
        psi = ev.inclusion(pairwise_distances(ev.points, ev.points))
        assert np.all(np.diag(psi) == 1.0)
    conf = m.class_confidences(s.X[:1])
    assert conf[0, 0] == 1.0


def test_far_query_has_no_confidence():
    m = fit_evm(apply_strategy(two_blobs(), "baseline"), EvmConfig(tail_size=10))
    assert np.all(m.class_confidences(np.array([[1e6, -1e6]])) == 0.0)


def test_spl_pseudo_class_anchors():
    s = two_blobs()
    s = SampleSet.concat([s, SampleSet(np.array([[4.0, 4.0], [4.1, 4], [4, 4.2]]), ["u"] * 3)])
    m = fit_evm(apply_strategy(s, "spl"), EvmConfig(tail_size=5))
    assert m.classes_ == ("a", "b", Pseudo(0))
    assert len(m.anchors[Pseudo(0)]) == 3
    assert m.score(np.array([[4.0, 4.05]])).predicted[0] == UNKNOWN


def test_kvr_lowers_inclusion_at_kuc_location(toy):
    cfg = EvmConfig(tail_size=20)
    base = fit_evm(apply_strategy(toy.train, "baseline"), cfg)
    kvr = fit_evm(apply_strategy(toy.train, "kvr"), cfg)
    ring = toy.test.X[np.asarray(toy.test_roles) == "KUC"]
    b = base.class_confidences(ring).max(axis=1)
    k = kvr.class_confidences(ring).max(axis=1)
    assert k.mean() < b.mean()
    assert np.all(k <= b + 1e-12)


def test_confidence_falls_off_along_rays(toy):
    m = fit_evm(apply_strategy(toy.train, "kvr"), EvmConfig(tail_size=20))
    centers = {"k0": (0.0, 1.5), "k1": (-1.3, -0.75), "k2": (1.3, -0.75)}
    for k, (c, center) in enumerate(centers.items()):
        # max over anchors ripples inside the cloud; start past its farthest sample
        pts = toy.train.X[toy.train.labels == c]
        start = np.linalg.norm(pts - center, axis=1).max()
        for angle in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            direction = np.array([np.cos(angle), np.sin(angle)])
            ts = np.linspace(start, start + 4.0, 30)
            conf = m.class_confidences(np.asarray(center) + ts[:, None] * direction)[:, k]
            assert np.all(np.diff(conf) <= 1e-12), (c, angle)


def test_empty_kuc_set_spl_equals_baseline():
    s = two_blobs()
    a = fit_evm(apply_strategy(s, "baseline"))
    b = fit_evm(apply_strategy(s, "spl"))
    for c in ("a", "b"):
        assert np.array_equal(a.anchors[c].shapes, b.anchors[c].shapes)
        assert np.array_equal(a.anchors[c].scales, b.anchors[c].scales)


def test_order_invariance():
    s = two_blobs(seed=3)
    perm = np.random.default_rng(1).permutation(len(s))
    q = np.random.default_rng(2).normal(4, 4, (30, 2))
    a = fit_evm(apply_strategy(s, "baseline"), EvmConfig(tail_size=8)).class_confidences(q)
    b = fit_evm(apply_strategy(s.subset(perm), "baseline"),
                EvmConfig(tail_size=8)).class_confidences(q)
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_single_class_rejected():
    s = SampleSet(np.zeros((3, 2)) + np.arange(3)[:, None], ["a"] * 3)
    with pytest.raises(ValueError):
        fit_evm(apply_strategy(s, "baseline"))


def test_set_cover_keeps_subset():
    s = two_blobs()
    m = fit_evm(apply_strategy(s, "baseline"), EvmConfig(tail_size=10, coverage=0.5))
    assert 0 < len(m.anchors["a"]) < 20


def test_cevm_tight_blob_becomes_one_centroid():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.01, (50, 2)), rng.normal(5, 0.01, (50, 2))])
    v = cevm_reduce(apply_strategy(SampleSet(X, ["a"] * 50 + ["b"] * 50), "baseline"),
                    EvmConfig(eps=1.0, min_pts=3))
    assert list(v.labels) == ["a", "b"]
    assert np.allclose(v.X[0], X[:50].mean(axis=0))


def test_cevm_kvr_keeps_negative_pool(toy):
    v = apply_strategy(toy.train, "kvr")
    r = cevm_reduce(v)
    assert len(r.negative_pool) == len(v.negative_pool)
    assert np.array_equal(r.X[r.negative_pool], v.X[v.negative_pool])


def test_cevm_mpl_two_kuc_clusters():
    rng = np.random.default_rng(1)
    kc = rng.normal(0, 0.05, (10, 2))
    kuc = np.vstack([rng.normal(5, 0.05, (5, 2)), rng.normal(-5, 0.05, (5, 2))])
    s = SampleSet(np.vstack([kc, kuc, kc + 20]), ["a"] * 10 + ["u"] * 10 + ["b"] * 10)
    r = cevm_reduce(apply_strategy(s, "mpl"), EvmConfig(eps=0.5, min_pts=3))
    assert len([p for p in r.positive_classes if isinstance(p, Pseudo)]) == 2


def test_more_mixups_do_not_mean_more_reduced_kucs(toy):
    known = toy.train.known_only()
    stats = centroid_stats(known)
    counts = []
    for ratio in (0.1, 0.25, 0.5, 1.0, 2.0, 4.0):
        batch = generate_mixups(known, stats, MixupConfig(ratio=ratio, seed=0))
        view = apply_strategy(SampleSet.concat([known, batch.as_samples()]), "spl")
        r = cevm_reduce(view)
        counts.append(sum(1 for l in r.labels if isinstance(l, Pseudo)))
    # the reduced count peaks and then shrinks although the input keeps growing
    assert max(counts) > counts[-1]
    assert any(b < a for a, b in zip(counts, counts[1:]))


def test_raster_export(tmp_path, toy):
    m = fit_evm(apply_strategy(toy.train, "kvr"))
    rows = confidence_raster(m, (-5, 5), (-5, 5), steps=4)
    assert len(rows) == 16 * 3
    export_raster(rows, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "x,y,class,confidence" and len(lines) == 49

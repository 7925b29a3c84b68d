import numpy as np
import pytest
from sklearn.svm import SVC, OneClassSVM

from lord.data import UNKNOWN, SampleSet, toy_benchmark
from lord.strategy import UnsupportedStrategy, apply_strategy
from lord.svm import (Kernel, SvmParams, fit_pisvm, fit_wsvm, smo_solve, smo_train_binary,
                      train_one_class)


def blobs(seed=0, n=20, gap=2.0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(-gap, 0.6, (n, 2)), rng.normal(gap, 0.6, (n, 2))])
    return X, np.r_[-np.ones(n), np.ones(n)]


@pytest.fixture(scope="module")
def toy():
    return toy_benchmark(seed=0)


def test_linear_separable_fit_is_feasible():
    X, y = blobs()
    m = smo_train_binary(X, y, C=10.0, kernel=Kernel("linear"))
    assert np.all(m.predict(X) == y)
    assert m.kkt_gap <= 1e-3
    assert abs(np.dot(m.alpha, m.y)) <= 1e-9
    assert np.all((m.alpha >= 0) & (m.alpha <= 10.0))


def test_xor_with_rbf():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    y = np.array([1, 1, -1, -1], dtype=float)
    m = smo_train_binary(X, y, C=10.0, kernel=Kernel("rbf", 1.0))
    assert np.all(np.sign(m.decision(X)) == y)


def test_single_label_rejected():
    with pytest.raises(ValueError):
        smo_train_binary(np.zeros((3, 2)), np.ones(3))


@pytest.mark.parametrize("C, gamma", [(0.1, 0.5), (1.0, 1.0), (10.0, 0.2)])
def test_matches_libsvm_reference(C, gamma):
    X, y = blobs(seed=4, gap=0.8)
    ours = smo_train_binary(X, y, C=C, kernel=Kernel("rbf", gamma), tol=1e-6)
    ref = SVC(C=C, gamma=gamma, tol=1e-6).fit(X, y)
    q = np.random.default_rng(1).normal(0, 2, (50, 2))
    assert np.allclose(ours.decision(q), ref.decision_function(q), atol=1e-3)


def test_permutation_invariance():
    X, y = blobs(seed=2, gap=1.0)
    perm = np.random.default_rng(3).permutation(len(y))
    q = np.random.default_rng(4).normal(0, 2, (40, 2))
    a = smo_train_binary(X, y, 1.0, Kernel("rbf", 0.5), tol=1e-8).decision(q)
    b = smo_train_binary(X[perm], y[perm], 1.0, Kernel("rbf", 0.5), tol=1e-8).decision(q)
    assert np.allclose(a, b, atol=1e-5)
    assert np.array_equal(np.sign(a), np.sign(b))


def test_smo_solver_respects_box_and_equality():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(8, 8))
    Q = A @ A.T
    y = np.where(rng.random(8) < 0.5, -1.0, 1.0)
    y[:2] = [-1, 1]
    sol = smo_solve(Q, -np.ones(8), y, 2.0, tol=1e-8)
    assert np.all((sol.alpha >= 0) & (sol.alpha <= 2.0))
    assert abs(sol.alpha @ y) <= 1e-9


def test_one_class_nu_property():
    X = np.random.default_rng(5).normal(0, 0.3, (100, 2))
    m = train_one_class(X, nu=0.1, kernel=Kernel("rbf", 1.0))
    assert np.mean(m.decision(X) >= 0) >= 0.85
    assert m.coef.sum() == pytest.approx(1.0, abs=1e-12)
    assert m.coef.max() <= 1 / (0.1 * 100) + 1e-15


def test_one_class_matches_libsvm_up_to_scale():
    X = np.random.default_rng(6).normal(0, 1.0, (60, 2))
    m = train_one_class(X, nu=0.2, kernel=Kernel("rbf", 0.5), tol=1e-7)
    ref = OneClassSVM(nu=0.2, gamma=0.5, tol=1e-7).fit(X)
    q = np.random.default_rng(7).normal(0, 2, (30, 2))
    # libsvm's coefficients sum to nu * n instead of 1
    assert np.allclose(m.decision(q) * 0.2 * 60, ref.decision_function(q), atol=1e-3)


def test_one_class_bad_inputs():
    with pytest.raises(ValueError):
        train_one_class(np.random.default_rng(0).normal(size=(5, 2)), nu=0.0)
    with pytest.raises(ValueError):
        train_one_class(np.ones((5, 2)), nu=0.5)


def test_two_sample_class_rejected():
    s = SampleSet(np.r_[np.zeros((2, 2)), np.ones((5, 2)) + np.arange(5)[:, None]],
                  ["a", "a"] + ["b"] * 5)
    with pytest.raises(ValueError, match="class a"):
        fit_pisvm(apply_strategy(s, "baseline"))


def test_mpl_unsupported(toy):
    with pytest.raises(UnsupportedStrategy):
        fit_wsvm(apply_strategy(toy.train, "mpl"))


def test_kvr_machine_count(toy):
    m = fit_wsvm(apply_strategy(toy.train, "kvr"))
    assert len(m.machines) == 3


@pytest.mark.parametrize("fit", [fit_wsvm, fit_pisvm])
def test_open_set_probabilities_on_toy(toy, fit):
    m = fit(apply_strategy(toy.train, "kvr"), SvmParams(C=1.0, gamma=1.0))
    far = m.class_probabilities(np.array([[30.0, -30.0]]))
    assert np.all(far < 0.05)
    q = np.random.default_rng(0).uniform(-8, 8, (200, 2))
    P = m.class_probabilities(q)
    assert np.all((P >= 0) & (P <= 1))
    centers = np.array([[0.0, 1.5], [-1.3, -0.75], [1.3, -0.75]])
    assert list(m.score(centers).predicted) == ["k0", "k1", "k2"]


def test_spl_pseudo_probability_goes_to_unknown_channel(toy):
    m = fit_wsvm(apply_strategy(toy.train, "spl"))
    ring_point = np.array([[3.5, 0.0]])
    sb = m.score(ring_point)
    assert sb.unknown[0] > 0
    assert sb.predicted[0] == UNKNOWN

"""SMO-trained support vector machines and their Weibull-calibrated open-set variants.

W-SVM pairs a one-class machine with a one-vs-rest binary machine per class and
multiplies the two Weibull-calibrated probabilities. PI-SVM keeps only the
binary machine and calibrates it on the positive decision values closest to
the boundary.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .base import ScoreBatch, check_queries, pairwise_distances, resolve
from .evt import WeibullParams, fit_tail, weibull_cdf
from .strategy import StrategyKind, StrategyView, UnsupportedStrategy

logger = logging.getLogger(__name__)

MIN_CLASS_SAMPLES = 3


class SmoNotConverged(RuntimeError):
    def __init__(self, iterations: int, gap: float, alpha: np.ndarray):
        self.iterations, self.gap, self.alpha = iterations, gap, alpha
        super().__init__(f"SMO stopped after {iterations} iterations with KKT gap {gap:.3g}")


@dataclass(frozen=True)
class Kernel:
    kind: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rbf", "linear"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf gamma must be > 0")

    def __call__(self, A, B) -> np.ndarray:
        A = np.asarray(A, dtype=np.float64)
        B = np.asarray(B, dtype=np.float64)
        if self.kind == "linear":
            return A @ B.T
        return np.exp(-self.gamma * pairwise_distances(A, B) ** 2)


@dataclass
class DualSolution:
    alpha: np.ndarray
    rho: float
    gap: float
    iterations: int
    objective: float


def smo_solve(Q, p, y, upper, alpha0=None, tol: float = 1e-3, max_iter: int = 200_000) -> DualSolution:
    """Minimise 0.5 a'Qa + p'a  s.t.  y'a = y'alpha0,  0 <= a <= upper.

    Q is the signed matrix (y_i y_j K_ij for a binary machine). Working pairs
    are the maximal violating pair; ties resolve to the lowest index. Returns
    the solution with rho, where the decision value is sum(a_i y_i K_i.) - rho.
    """
    Q = np.asarray(Q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    C = np.broadcast_to(np.asarray(upper, dtype=np.float64), (n,)).copy()
    a = np.zeros(n) if alpha0 is None else np.array(alpha0, dtype=np.float64)
    G = Q @ a + p
    diagQ = np.diag(Q).copy()
    tau = 1e-12
    gap = math.inf
    it = 0
    pos = y > 0
    while it < max_iter:
        up = (pos & (a < C)) | (~pos & (a > 0))
        low = (pos & (a > 0)) | (~pos & (a < C))
        v = -y * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        vu = np.where(up, v, -np.inf)
        vl = np.where(low, v, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        gap = vu[i] - vl[j]
        if gap <= tol:
            break
        it += 1
        ai, aj = a[i], a[j]
        Ci, Cj = C[i], C[j]
        if y[i] != y[j]:
            quad = max(diagQ[i] + diagQ[j] + 2 * Q[i, j], tau)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            quad = max(diagQ[i] + diagQ[j] - 2 * Q[i, j], tau)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        dai, daj = ai - a[i], aj - a[j]
        a[i], a[j] = ai, aj
        G += Q[:, i] * dai + Q[:, j] * daj
    else:
        raise SmoNotConverged(it, gap, a)

    yG = y * G
    free = (a > 0) & (a < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        ub, lb = math.inf, -math.inf
        at_up = ((a >= C) & pos) | ((a <= 0) & ~pos)
        at_low = ((a >= C) & ~pos) | ((a <= 0) & pos)
        if at_up.any():
            ub = float(yG[at_up].min())
        if at_low.any():
            lb = float(yG[at_low].max())
        rho = 0.5 * (ub + lb) if math.isfinite(ub) and math.isfinite(lb) else (
            ub if math.isfinite(ub) else lb)
    obj = float(0.5 * a @ (Q @ a) + p @ a)
    return DualSolution(a, rho, float(max(gap, 0.0)), it, obj)


@dataclass(frozen=True)
class BinarySvm:
    support: np.ndarray
    coef: np.ndarray  # alpha_i * y_i of the support vectors
    bias: float
    kernel: Kernel
    C: float
    alpha: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    kkt_gap: float = 0.0
    dual_objective: float = 0.0

    def decision(self, X) -> np.ndarray:
        X = check_queries(X, self.support.shape[1])
        if len(self.coef) == 0:
            return np.full(len(X), self.bias)
        return self.kernel(X, self.support) @ self.coef + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision(X) >= 0, 1, -1)


@dataclass(frozen=True)
class OneClassSvm:
    support: np.ndarray
    coef: np.ndarray
    rho: float
    kernel: Kernel
    nu: float
    kkt_gap: float = 0.0

    def decision(self, X) -> np.ndarray:
        X = check_queries(X, self.support.shape[1])
        return self.kernel(X, self.support) @ self.coef - self.rho


def smo_train_binary(X, y, C: float = 1.0, kernel: Kernel = Kernel(), tol: float = 1e-3,
                     max_iter: int = 200_000) -> BinarySvm:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not C > 0:
        raise ValueError("C must be > 0")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("labels must be +1/-1")
    if len(np.unique(y)) < 2:
        raise ValueError("binary SVM needs both labels present")
    K = kernel(X, X)
    Q = (y[:, None] * y[None, :]) * K
    sol = smo_solve(Q, -np.ones(len(y)), y, C, tol=tol, max_iter=max_iter)
    sv = sol.alpha > 0
    return BinarySvm(X[sv].copy(), (sol.alpha * y)[sv], -sol.rho, kernel, C,
                     sol.alpha, y.copy(), sol.gap, sol.objective)


def train_one_class(X, nu: float = 0.1, kernel: Kernel = Kernel(), tol: float = 1e-3,
                    max_iter: int = 200_000) -> OneClassSvm:
    """nu-one-class machine with coefficients in [0, 1/(nu n)] summing to one."""
    X = np.asarray(X, dtype=np.float64)
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    n = len(X)
    if n < 2:
        raise ValueError("one-class SVM needs at least two samples")
    if np.ptp(X, axis=0).max() == 0:
        raise ValueError("one-class SVM input consists of duplicates only")
    upper = 1.0 / (nu * n)
    a0 = np.zeros(n)
    full = min(int(math.floor(nu * n)), n)
    a0[:full] = upper
    if full < n:
        a0[full] = max(0.0, 1.0 - full * upper)
    K = kernel(X, X)
    sol = smo_solve(K, np.zeros(n), np.ones(n), upper, alpha0=a0, tol=tol, max_iter=max_iter)
    sv = sol.alpha > 0
    return OneClassSvm(X[sv].copy(), sol.alpha[sv], sol.rho, kernel, nu, sol.gap)


@dataclass(frozen=True)
class ScoreCalibrator:
    """Weibull CDF over raw scores shifted so the lowest fitting score sits at zero."""

    shift: float
    params: WeibullParams

    @classmethod
    def fit(cls, scores) -> "ScoreCalibrator":
        s = np.asarray(scores, dtype=np.float64)
        shift = float(s.min())
        return cls(shift, fit_tail(s - shift))

    def __call__(self, scores) -> np.ndarray:
        return np.asarray(weibull_cdf(np.asarray(scores) - self.shift, self.params))


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    gamma: float = 1.0
    nu: float = 0.1
    kernel: str = "rbf"
    boundary_fraction: float = 0.25
    tol: float = 1e-3


@dataclass(frozen=True)
class _ClassMachines:
    binary: BinarySvm
    binary_cal: ScoreCalibrator
    one_class: OneClassSvm | None = None
    one_class_cal: ScoreCalibrator | None = None


@dataclass(frozen=True)
class OpenSetSvm:
    """Shared container for W-SVM and PI-SVM models."""

    variant: str
    machines: dict
    classes_: tuple
    known_classes: tuple[str, ...]
    kind: StrategyKind
    dim: int

    @property
    def classes(self) -> tuple[str, ...]:
        return self.known_classes

    def class_probabilities(self, X) -> np.ndarray:
        X = check_queries(X, self.dim)
        out = np.empty((len(X), len(self.classes_)))
        for k, c in enumerate(self.classes_):
            m = self.machines[c]
            prob = m.binary_cal(m.binary.decision(X))
            if self.variant == "wsvm":
                prob = prob * m.one_class_cal(m.one_class.decision(X))
            out[:, k] = prob
        return out

    def score(self, X) -> ScoreBatch:
        P = self.class_probabilities(X)
        K = len(self.known_classes)
        unknown = P[:, K:].max(axis=1) if P.shape[1] > K else np.zeros(len(P))
        return resolve(self.known_classes, P[:, :K], unknown)


WsvmModel = PiSvmModel = OpenSetSvm


def _check_view(view: StrategyView) -> np.ndarray:
    if view.kind is StrategyKind.MPL:
        raise UnsupportedStrategy("open-set SVMs do not support MPL")
    labels = np.asarray(view.labels, dtype=object)
    for c in view.positive_classes:
        n = int(np.sum(labels == c))
        if n < MIN_CLASS_SAMPLES:
            raise ValueError(f"class {c} has {n} samples; SVMs need at least "
                             f"{MIN_CLASS_SAMPLES} per class")
    return labels


def _fit(view: StrategyView, params: SvmParams, variant: str) -> OpenSetSvm:
    labels = _check_view(view)
    kernel = Kernel(params.kernel, params.gamma)
    machines = {}
    for c in view.positive_classes:
        y = np.where(labels == c, 1.0, -1.0)
        binary = smo_train_binary(view.X, y, params.C, kernel, params.tol)
        pos_scores = binary.decision(view.X[y > 0])
        if variant == "wsvm":
            oc = train_one_class(view.X[y > 0], params.nu, kernel, params.tol)
            machines[c] = _ClassMachines(
                binary, ScoreCalibrator.fit(pos_scores),
                oc, ScoreCalibrator.fit(oc.decision(view.X[y > 0])),
            )
        else:
            tail = np.sort(pos_scores[pos_scores > 0])
            if len(tail) < 2:
                tail = np.sort(pos_scores)
            n_tail = max(2, math.ceil(params.boundary_fraction * len(tail)))
            machines[c] = _ClassMachines(binary, ScoreCalibrator.fit(tail[:n_tail]))
    return OpenSetSvm(variant, machines, tuple(view.positive_classes), view.known_classes,
                      view.kind, view.dim)


def fit_wsvm(view: StrategyView, params: SvmParams = SvmParams()) -> OpenSetSvm:
    return _fit(view, params, "wsvm")


def fit_pisvm(view: StrategyView, params: SvmParams = SvmParams()) -> OpenSetSvm:
    return _fit(view, params, "pisvm")


def svm_score(model: OpenSetSvm, query) -> ScoreBatch:
    return model.score(query)

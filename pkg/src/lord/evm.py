"""Extreme Value Machine, its clustered variant (C-EVM) and DBSCAN."""
from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .base import ScoreBatch, check_queries, pairwise_distances, resolve
from .data import UNKNOWN
from .evt import WeibullParams, fit_tail
from .strategy import Pseudo, StrategyKind, StrategyView

logger = logging.getLogger(__name__)

NOISE = -1


@dataclass(frozen=True)
class EvmConfig:
    tail_size: int = 20
    margin_scale: float = 0.5
    eps: float = 0.3
    min_pts: int = 3
    coverage: float | None = None

    def __post_init__(self):
        if self.tail_size < 1:
            raise ValueError("tail_size must be >= 1")
        if not 0 < self.margin_scale <= 1:
            raise ValueError("margin_scale must lie in (0, 1]")
        if not self.eps > 0:
            raise ValueError("eps must be > 0")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")
        if self.coverage is not None and not 0 < self.coverage <= 1:
            raise ValueError("coverage must lie in (0, 1] or be None")


@dataclass(frozen=True)
class ExtremeVectors:
    points: np.ndarray  # (m, D)
    shapes: np.ndarray  # (m,)
    scales: np.ndarray  # (m,)
    source_index: np.ndarray  # row of each anchor in the training view

    def __len__(self) -> int:
        return len(self.shapes)

    def params(self, i: int) -> WeibullParams:
        return WeibullParams(float(self.shapes[i]), float(self.scales[i]))

    def inclusion(self, D: np.ndarray) -> np.ndarray:
        """Psi for a (n, m) distance block against these anchors."""
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(-((D / self.scales) ** self.shapes))


@dataclass(frozen=True)
class EvmModel:
    classes_: tuple  # positive classes, in view order
    anchors: dict
    known_classes: tuple[str, ...]
    kind: StrategyKind
    dim: int

    @property
    def classes(self) -> tuple[str, ...]:
        return self.known_classes

    def class_confidences(self, X) -> np.ndarray:
        """(n, |positive classes|) max inclusion over each class's anchors."""
        X = check_queries(X, self.dim)
        out = np.zeros((len(X), len(self.classes_)))
        for k, c in enumerate(self.classes_):
            ev = self.anchors[c]
            out[:, k] = ev.inclusion(pairwise_distances(X, ev.points)).max(axis=1)
        return out

    def score(self, X) -> ScoreBatch:
        conf = self.class_confidences(X)
        K = len(self.known_classes)
        unknown = conf[:, K:].max(axis=1) if conf.shape[1] > K else np.zeros(len(conf))
        return resolve(self.known_classes, conf[:, :K], unknown)


def _reduce_set_cover(psi: np.ndarray, threshold: float) -> np.ndarray:
    """Greedy set cover: psi[i, j] is anchor i's inclusion of sample j."""
    covers = psi >= threshold
    uncovered = np.ones(psi.shape[1], dtype=bool)
    chosen = []
    while uncovered.any():
        gain = (covers & uncovered).sum(axis=1)
        best = int(np.argmax(gain))
        if gain[best] == 0:
            break
        chosen.append(best)
        uncovered &= ~covers[best]
    return np.array(sorted(chosen), dtype=int)


def fit_evm(view: StrategyView, cfg: EvmConfig = EvmConfig()) -> EvmModel:
    """One Weibull per training sample of every positive class.

    Each fit uses the ``tail_size`` smallest margin distances (distance times
    ``margin_scale``) from the sample to anything outside its class. Under KvR
    the unknowns only ever appear in those rest sets.
    """
    if len(view.positive_classes) + (len(view.negative_pool) > 0) < 2:
        raise ValueError("EVM needs at least two effective classes")
    labels = np.asarray(view.labels, dtype=object)
    anchors = {}
    warned = False
    for c in view.positive_classes:
        mine = np.flatnonzero(labels == c)
        rest = np.flatnonzero(labels != c)
        if len(rest) == 0:
            raise ValueError(f"class {c} has an empty rest pool")
        if len(mine) == 0:
            raise ValueError(f"class {c} has no samples")
        tau = min(cfg.tail_size, len(rest))
        if tau < cfg.tail_size and not warned:
            logger.warning("tail size %d clamped to rest pool size %d", cfg.tail_size, tau)
            warned = True
        D = pairwise_distances(view.X[mine], view.X[rest]) * cfg.margin_scale
        tails = np.sort(np.partition(D, tau - 1, axis=1)[:, :tau], axis=1)
        params = [fit_tail(t) for t in tails]
        ev = ExtremeVectors(
            view.X[mine].copy(),
            np.array([p.shape for p in params]),
            np.array([p.scale for p in params]),
            mine,
        )
        if cfg.coverage is not None and len(mine) > 1:
            psi = ev.inclusion(pairwise_distances(view.X[mine], view.X[mine]).T).T
            keep = _reduce_set_cover(psi, cfg.coverage)
            ev = ExtremeVectors(ev.points[keep], ev.shapes[keep], ev.scales[keep], mine[keep])
        anchors[c] = ev
    return EvmModel(tuple(view.positive_classes), anchors, view.known_classes,
                    view.kind, view.dim)


def score_evm(model: EvmModel, query) -> ScoreBatch:
    return model.score(query)


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Density clustering; returns cluster ids in discovery order, ``-1`` for noise.

    A point is a core point when its eps-neighbourhood (itself included) holds
    at least ``min_pts`` points. Points are visited in input order.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    n = len(P)
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels
    neigh = [np.flatnonzero(row <= eps) for row in pairwise_distances(P, P)]
    core = np.array([len(nb) >= min_pts for nb in neigh])
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        visited[i] = True
        labels[i] = cluster
        queue = deque(neigh[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster
            if visited[j]:
                continue
            visited[j] = True
            if core[j]:
                queue.extend(neigh[j])
        cluster += 1
    return labels


def _centroids(X: np.ndarray, cfg: EvmConfig) -> np.ndarray:
    assign = dbscan(X, cfg.eps, cfg.min_pts)
    reps = [X[assign == k].mean(axis=0) for k in range(assign.max() + 1)]
    reps += [X[i] for i in np.flatnonzero(assign == NOISE)]
    return np.array(reps).reshape(len(reps), X.shape[1])


def cevm_reduce(view: StrategyView, cfg: EvmConfig = EvmConfig()) -> StrategyView:
    """Replace every DBSCAN cluster of a class by its centroid; noise points stay.

    SPL/MPL cluster all unknowns as one class (MPL then turns each resulting
    point into its own pseudo class); KvR leaves the negative pool untouched.
    """
    labels = np.asarray(view.labels, dtype=object)
    blocks_X, blocks_y = [], []
    for c in view.known_classes:
        rows = view.X[labels == c]
        if len(rows):
            reps = _centroids(rows, cfg)
            blocks_X.append(reps)
            blocks_y += [c] * len(reps)

    pseudo_map = {}
    positives = tuple(view.known_classes)
    negative_pool = np.empty(0, dtype=int)
    if view.kind is StrategyKind.KVR:
        neg = view.X[view.negative_pool]
        start = sum(len(b) for b in blocks_X)
        blocks_X.append(neg)
        blocks_y += [UNKNOWN] * len(neg)
        negative_pool = np.arange(start, start + len(neg))
    elif view.kind in (StrategyKind.SPL, StrategyKind.MPL):
        is_pseudo = np.array([view.is_pseudo(l) for l in labels])
        reps = _centroids(view.X[is_pseudo], cfg)
        blocks_X.append(reps)
        if view.kind is StrategyKind.SPL:
            pseudo = [Pseudo(0)] * len(reps)
        else:
            pseudo = [Pseudo(k) for k in range(len(reps))]
        blocks_y += pseudo
        pseudo_map = {p: UNKNOWN for p in pseudo}
        positives = positives + tuple(dict.fromkeys(pseudo))

    X = np.vstack(blocks_X)
    X.setflags(write=False)
    negative_pool.setflags(write=False)
    return StrategyView(view.kind, X, tuple(blocks_y), view.known_classes, positives,
                        negative_pool, pseudo_map, view.degraded)


def confidence_raster(model, xlim, ylim, steps: int = 100) -> list[tuple]:
    """Per-class confidences on a regular 2-D grid: rows of (x, y, class, confidence)."""
    xs = np.linspace(*xlim, steps)
    ys = np.linspace(*ylim, steps)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.c_[gx.ravel(), gy.ravel()]
    if isinstance(model, EvmModel):
        conf, names = model.class_confidences(grid), [str(c) for c in model.classes_]
    else:
        sb = model.score(grid)
        conf, names = np.c_[sb.known, sb.unknown], [*sb.classes, UNKNOWN]
    return [(float(x), float(y), names[k], float(conf[i, k]))
            for i, (x, y) in enumerate(grid) for k in range(len(names))]


def export_raster(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "class", "confidence"])
        w.writerows((repr(x), repr(y), c, repr(v)) for x, y, c, v in rows)

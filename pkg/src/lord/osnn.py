"""Open-set nearest neighbour classifier driven by the nearest-neighbour distance ratio."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import ScoreBatch, check_queries, pairwise_distances
from .data import UNKNOWN
from .strategy import StrategyKind, StrategyView, map_prediction


@dataclass(frozen=True)
class OsnnScore:
    predicted_label: object
    ratio: float

    @property
    def confidence(self) -> float:
        return 1.0 - self.ratio


@dataclass(frozen=True)
class OsnnModel:
    view: StrategyView
    effective: tuple  # class used for the "distinct classes" test, per stored sample

    @property
    def kind(self) -> StrategyKind:
        return self.view.kind

    @property
    def classes(self) -> tuple[str, ...]:
        return self.view.known_classes

    def score_one(self, query) -> OsnnScore:
        q = check_queries(query, self.view.dim)
        label, r = self._ratios(pairwise_distances(q, self.view.X))
        return OsnnScore(label[0], float(r[0]))

    def _ratios(self, D: np.ndarray):
        eff = np.asarray(self.effective, dtype=object)
        n = D.shape[0]
        labels = np.empty(n, dtype=object)
        ratios = np.empty(n)
        for q in range(n):
            d = D[q]
            i = int(np.argmin(d))  # argmin returns the lowest index on ties
            other = eff != eff[i]
            dj_idx = np.flatnonzero(other)
            j = dj_idx[int(np.argmin(d[dj_idx]))]
            di, dj = d[i], d[j]
            r = 1.0 if dj == 0 else min(1.0, di / dj)
            raw = self.view.labels[i]
            if self.kind is StrategyKind.KVR and raw == UNKNOWN:
                r, label = 1.0, UNKNOWN
            else:
                label = map_prediction(self.view, raw)
            labels[q], ratios[q] = label, r
        return labels, ratios

    def score(self, X) -> ScoreBatch:
        X = check_queries(X, self.view.dim)
        labels, ratios = self._ratios(pairwise_distances(X, self.view.X))
        conf = 1.0 - ratios
        known = np.zeros((len(X), len(self.classes)))
        unknown = np.zeros(len(X))
        index = {c: k for k, c in enumerate(self.classes)}
        for q, lab in enumerate(labels):
            if lab == UNKNOWN:
                # nearest-KUC under KvR carries r = 1, i.e. zero confidence
                unknown[q] = conf[q]
            else:
                known[q, index[lab]] = conf[q]
        return ScoreBatch(self.classes, known, unknown, labels)


def fit_osnn(view: StrategyView) -> OsnnModel:
    """Store the view verbatim.

    The view's labels already encode class identity for the distinct-class
    test: KvR unknowns share the marker, SPL shares one pseudo-label and MPL
    gives every unknown its own.
    """
    effective = tuple(view.labels)
    if len(set(effective)) < 2:
        raise ValueError("OSNN needs at least two distinct classes in storage")
    return OsnnModel(view, effective)


def score_osnn(model: OsnnModel, query) -> OsnnScore:
    return model.score_one(query)

"""Uniform output of every open-set model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import UNKNOWN


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ScoreBatch:
    """Scores for a batch of queries.

    known:     (n, |C_K|) confidences over the known classes, in ``classes`` order
    unknown:   (n,) confidence routed to the unknown channel
    predicted: (n,) mapped label, a known class id or ``"u"``
    """

    classes: tuple[str, ...]
    known: np.ndarray
    unknown: np.ndarray
    predicted: np.ndarray

    @property
    def max_known(self) -> np.ndarray:
        if self.known.shape[1] == 0:
            return np.zeros(self.known.shape[0])
        return self.known.max(axis=1)


def resolve(classes, known: np.ndarray, unknown: np.ndarray) -> ScoreBatch:
    """Argmax over known classes; the unknown channel wins only when strictly larger."""
    known = np.asarray(known, dtype=np.float64)
    unknown = np.asarray(unknown, dtype=np.float64)
    best = known.argmax(axis=1)
    labels = np.array([classes[b] for b in best], dtype=object)
    labels[unknown > known[np.arange(len(best)), best]] = UNKNOWN
    return ScoreBatch(tuple(classes), known, unknown, labels)


def check_queries(X, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise DimensionMismatch(f"expected queries of dimension {dim}, got shape {X.shape}")
    return X


def pairwise_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Euclidean distances, exact to rounding (no expanded-square shortcut)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, 4_000_000 // max(1, B.shape[0] * max(1, A.shape[1])))
    for s in range(0, A.shape[0], step):
        diff = A[s:s + step, None, :] - B[None, :, :]
        out[s:s + step] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out

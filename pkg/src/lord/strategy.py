"""Training-set transformations for exploiting known unknowns.

Four kinds are supported:

* ``baseline`` drops every unknown-marked sample.
* ``spl`` gives all unknowns one shared pseudo-label.
* ``mpl`` gives each unknown its own pseudo-label.
* ``kvr`` keeps unknowns as rest-class negatives that never act as positives.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .data import UNKNOWN, SampleSet

logger = logging.getLogger(__name__)


class StrategyKind(str, enum.Enum):
    BASELINE = "baseline"
    SPL = "spl"
    MPL = "mpl"
    KVR = "kvr"

    @classmethod
    def parse(cls, value) -> "StrategyKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown strategy {value!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


class UnsupportedStrategy(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Pseudo:
    """Reserved pseudo-label. Never equal to any user class id (which are str)."""

    index: int

    def __str__(self) -> str:
        return f"<pseudo:{self.index}>"


@dataclass(frozen=True)
class StrategyView:
    kind: StrategyKind
    X: np.ndarray
    labels: tuple
    known_classes: tuple[str, ...]
    positive_classes: tuple
    negative_pool: np.ndarray
    pseudo_map: dict = field(default_factory=dict)
    degraded: bool = False

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def positive_mask(self) -> np.ndarray:
        return np.array([l != UNKNOWN for l in self.labels])

    def indices_of(self, label) -> np.ndarray:
        return np.array([i for i, l in enumerate(self.labels) if l == label], dtype=int)

    def is_pseudo(self, label) -> bool:
        return label in self.pseudo_map


def apply_strategy(train: SampleSet, kind, known_classes=None) -> StrategyView:
    kind = StrategyKind.parse(kind)
    if len(train) == 0:
        raise ValueError("empty training set")
    kcs = tuple(known_classes) if known_classes is not None else train.classes()
    if not kcs:
        raise ValueError("training set contains no known class")
    unknown = train.unknown_mask
    degraded = False
    if kind is not StrategyKind.BASELINE and not unknown.any():
        logger.warning("no unknown-marked samples; %s degrades to baseline", kind.value)
        kind, degraded = StrategyKind.BASELINE, True

    X = train.X
    labels = list(train.labels)
    pseudo_map: dict = {}
    negative_pool = np.empty(0, dtype=int)
    positives: tuple = kcs

    if kind is StrategyKind.BASELINE:
        keep = np.flatnonzero(~unknown)
        X = X[keep]
        labels = [labels[i] for i in keep]
    elif kind is StrategyKind.SPL:
        p = Pseudo(0)
        labels = [p if l == UNKNOWN else l for l in labels]
        pseudo_map = {p: UNKNOWN}
        positives = kcs + (p,)
    elif kind is StrategyKind.MPL:
        counter = iter(range(len(labels)))
        labels = [Pseudo(next(counter)) if l == UNKNOWN else l for l in labels]
        pseudos = tuple(l for l in labels if isinstance(l, Pseudo))
        pseudo_map = {p: UNKNOWN for p in pseudos}
        positives = kcs + pseudos
    else:
        negative_pool = np.flatnonzero(unknown)

    X = np.array(X, copy=True)
    X.setflags(write=False)
    negative_pool.setflags(write=False)
    return StrategyView(kind, X, tuple(labels), kcs, positives, negative_pool,
                        pseudo_map, degraded)


def map_prediction(view: StrategyView, raw_label):
    """Map a raw model label back to a known class or the unknown marker."""
    if raw_label in view.pseudo_map:
        return UNKNOWN
    if raw_label == UNKNOWN or raw_label in view.known_classes:
        return raw_label
    raise ValueError(f"label {raw_label!r} is outside the view's label universe")

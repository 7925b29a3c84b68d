"""Single softmax layer on fixed features.

Baseline and SPL train with cross-entropy (SPL adds one output for the
pseudo class). KvR trains with the entropic open-set objective: unknown
samples are pushed towards a uniform distribution over the known outputs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .base import ScoreBatch, check_queries, resolve
from .strategy import Pseudo, StrategyKind, StrategyView, UnsupportedStrategy

UNKNOWN_TARGET = -1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    batch_size: int = 64
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(np.asarray(z, dtype=np.float64)))


def entropic_objective(logits, target) -> tuple[float, np.ndarray]:
    """Loss and exact gradient w.r.t. the logits for one sample.

    ``target`` is an output index, or ``None``/``-1`` for an unknown sample.
    """
    z = np.asarray(logits, dtype=np.float64)
    logp = _log_softmax(z)
    p = np.exp(logp)
    if target is None or target == UNKNOWN_TARGET:
        return float(-logp.mean()), p - 1.0 / z.size
    grad = p.copy()
    grad[target] -= 1.0
    return float(-logp[target]), grad


def _batch_objective(Z: np.ndarray, t: np.ndarray):
    logp = _log_softmax(Z)
    P = np.exp(logp)
    n, C = Z.shape
    known = t != UNKNOWN_TARGET
    loss = np.empty(n)
    G = P.copy()
    rows = np.flatnonzero(known)
    loss[rows] = -logp[rows, t[rows]]
    G[rows, t[rows]] -= 1.0
    unk = ~known
    loss[unk] = -logp[unk].mean(axis=1)
    G[unk] -= 1.0 / C
    return loss, G


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray  # (outputs, D)
    bias: np.ndarray
    outputs: tuple  # output order: known classes, then the pseudo class under SPL
    known_classes: tuple[str, ...]
    kind: StrategyKind
    loss_history: tuple = field(default=(), compare=False)

    @property
    def classes(self) -> tuple[str, ...]:
        return self.known_classes

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def probabilities(self, X) -> np.ndarray:
        X = check_queries(X, self.dim)
        return softmax(X @ self.weights.T + self.bias)

    def score(self, X) -> ScoreBatch:
        P = self.probabilities(X)
        K = len(self.known_classes)
        unknown = P[:, K] if self.kind is StrategyKind.SPL else np.zeros(len(P))
        return resolve(self.known_classes, P[:, :K], unknown)

    def save(self, path) -> None:
        header = {
            "format": "lord-linear",
            "version": 1,
            "outputs": len(self.outputs),
            "dim": self.dim,
            "known_classes": list(self.known_classes),
            "strategy": self.kind.value,
        }
        lines = [json.dumps(header, sort_keys=True)]
        for w, b in zip(self.weights, self.bias):
            lines.append(" ".join(repr(float(v)) for v in (*w, b)))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LinearModel":
        head, *rows = Path(path).read_text(encoding="utf-8").splitlines()
        meta = json.loads(head)
        if meta.get("format") != "lord-linear":
            raise ValueError(f"{path}: not a linear model file")
        M = np.array([[float(v) for v in r.split()] for r in rows])
        if M.shape != (meta["outputs"], meta["dim"] + 1):
            raise ValueError(f"{path}: parameter block has shape {M.shape}")
        kind = StrategyKind(meta["strategy"])
        kcs = tuple(meta["known_classes"])
        outputs = kcs + ((Pseudo(0),) if kind is StrategyKind.SPL else ())
        return cls(M[:, :-1].copy(), M[:, -1].copy(), outputs, kcs, kind)


def _targets(view: StrategyView, outputs: tuple) -> np.ndarray:
    index = {c: k for k, c in enumerate(outputs)}
    return np.array([index.get(l, UNKNOWN_TARGET) for l in view.labels], dtype=int)


def full_loss(W, b, X, t, l2) -> float:
    loss, _ = _batch_objective(X @ W.T + b, t)
    return float(loss.mean() + 0.5 * l2 * np.sum(W * W))


def fit_linear(view: StrategyView, cfg: TrainConfig = TrainConfig()) -> LinearModel:
    """Zero-initialised mini-batch gradient descent; the seed only shuffles batches."""
    if view.kind is StrategyKind.MPL:
        raise UnsupportedStrategy("the linear head does not support MPL")
    kcs = view.known_classes
    outputs = tuple(view.positive_classes) if view.kind is StrategyKind.SPL else kcs
    t = _targets(view, outputs)
    X = view.X
    n, D = X.shape
    C = len(outputs)
    W = np.zeros((C, D))
    b = np.zeros(C)
    rng = np.random.default_rng(cfg.seed)
    history = [full_loss(W, b, X, t, cfg.l2)]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            _, G = _batch_objective(X[idx] @ W.T + b, t[idx])
            W -= cfg.learning_rate * (G.T @ X[idx] / len(idx) + cfg.l2 * W)
            b -= cfg.learning_rate * G.mean(axis=0)
        history.append(full_loss(W, b, X, t, cfg.l2))
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
        raise FloatingPointError("training diverged; lower the learning rate")
    return LinearModel(W, b, outputs, kcs, view.kind, tuple(history))


def score_linear(model: LinearModel, query) -> ScoreBatch:
    return model.score(query)

"""Feature-space mixup of known classes as synthetic unknowns, with an occupation filter.

A candidate mixes two samples of different classes with a factor drawn from
Beta(a, b) restricted to an interval. With ``alpha > 0`` a candidate is kept
only if it lies farther than ``alpha`` times the mean inter-centroid distance
from every class centroid.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import UNKNOWN, SampleSet, round_half_away


@dataclass(frozen=True)
class MixupConfig:
    beta_a: float = 2.0
    beta_b: float = 2.0
    lam_low: float = 0.4
    lam_high: float = 0.6
    ratio: float = 1.0
    alpha: float = 0.0
    seed: int = 0
    budget_factor: int = 100

    def __post_init__(self):
        if not 0 < self.lam_low < self.lam_high < 1:
            raise ValueError("lambda interval must lie inside (0, 1)")
        if self.beta_a <= 0 or self.beta_b <= 0:
            raise ValueError("beta shape parameters must be > 0")
        if self.ratio < 0:
            raise ValueError("mixup-to-known ratio must be >= 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.budget_factor < 1:
            raise ValueError("budget_factor must be >= 1")


@dataclass(frozen=True)
class CentroidStats:
    classes: tuple[str, ...]
    centroids: np.ndarray
    mean_distance: float


@dataclass(frozen=True)
class MixupBatch:
    X: np.ndarray
    pairs: np.ndarray  # (n, 2) rows i, j of train_kc.known_only()
    lambdas: np.ndarray
    attempted: int
    target: int
    alpha: float
    shortfall: int = 0
    rejected: int = 0

    def __len__(self) -> int:
        return len(self.lambdas)

    @property
    def acceptance_rate(self) -> float:
        return len(self) / self.attempted if self.attempted else 1.0

    def as_samples(self) -> SampleSet:
        return SampleSet(self.X, [UNKNOWN] * len(self))

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "target": self.target,
            "attempted": self.attempted,
            "accepted": len(self),
            "rejected": self.rejected,
            "shortfall": self.shortfall,
            "acceptance_rate": self.acceptance_rate,
        }


def centroid_stats(train_kc: SampleSet) -> CentroidStats:
    known = train_kc.known_only()
    classes = known.classes()
    if len(classes) < 2:
        raise ValueError("centroid statistics need at least two known classes")
    C = np.array([known.X[known.labels == c].mean(axis=0) for c in classes])
    dists = [np.linalg.norm(C[a] - C[b]) for a, b in itertools.combinations(range(len(C)), 2)]
    return CentroidStats(classes, C, float(np.mean(dists)))


def sample_lambda(cfg: MixupConfig, rng: np.random.Generator) -> float:
    """Beta draw restricted to [lam_low, lam_high] by rejection."""
    while True:
        lam = float(rng.beta(cfg.beta_a, cfg.beta_b))
        if cfg.lam_low <= lam <= cfg.lam_high:
            return lam


def mix(xi: np.ndarray, xj: np.ndarray, lam: float) -> np.ndarray:
    return lam * xi + (1.0 - lam) * xj


def candidate_stream(train_kc: SampleSet, cfg: MixupConfig):
    """Endless (i, j, lam, x) candidates; the stream depends on the seed only."""
    known = train_kc.known_only()
    X, y = known.X, known.labels
    n = len(known)
    if len(known.classes()) < 2:
        raise ValueError("mixup needs at least two known classes")
    rng = np.random.default_rng(cfg.seed)
    while True:
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        while y[j] == y[i]:
            j = int(rng.integers(n))
        lam = sample_lambda(cfg, rng)
        yield i, j, lam, mix(X[i], X[j], lam)


def keeps(x: np.ndarray, stats: CentroidStats, alpha: float) -> bool:
    """Occupation filter: strictly farther than alpha * mean distance from every centroid."""
    if alpha == 0:
        return True
    d = np.linalg.norm(stats.centroids - x, axis=1)
    return bool(np.all(d > alpha * stats.mean_distance))


def generate_mixups(train_kc: SampleSet, stats: CentroidStats, cfg: MixupConfig) -> MixupBatch:
    """Draw candidates until ``round(ratio * n_known)`` pass the filter or the budget runs out."""
    known = train_kc.known_only()
    target = round_half_away(cfg.ratio * len(known))
    budget = cfg.budget_factor * target
    accepted, pairs, lams = [], [], []
    attempted = 0
    stream = candidate_stream(train_kc, cfg) if target else iter(())
    for i, j, lam, x in stream:
        if len(accepted) >= target or attempted >= budget:
            break
        attempted += 1
        if keeps(x, stats, cfg.alpha):
            accepted.append(x)
            pairs.append((i, j))
            lams.append(lam)
    D = known.dim
    return MixupBatch(
        np.array(accepted).reshape(len(accepted), D),
        np.array(pairs, dtype=int).reshape(len(pairs), 2),
        np.array(lams),
        attempted,
        target,
        cfg.alpha,
        shortfall=target - len(accepted),
        rejected=attempted - len(accepted),
    )


def export_batch(batch: MixupBatch, csv_path, json_path=None) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x in batch.X:
            w.writerow([UNKNOWN, *(repr(float(v)) for v in x)])
    if json_path is not None:
        Path(json_path).write_text(json.dumps(batch.summary(), indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")


def alpha_sweep_summary(train_kc: SampleSet, stats: CentroidStats, cfg: MixupConfig,
                        alphas) -> dict:
    """Acceptance statistics of the same candidate stream under several alphas."""
    rows = []
    for a in alphas:
        batch = generate_mixups(train_kc, stats, replace(cfg, alpha=a))
        rows.append(batch.summary())
    return {"seed": cfg.seed, "ratio": cfg.ratio, "mean_centroid_distance": stats.mean_distance,
            "per_alpha": rows}

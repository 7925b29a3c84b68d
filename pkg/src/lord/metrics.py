"""Open-set metrics: score tables, OSCR and ROC curves, AUC and CCR at fixed FPR.

A known test sample counts as correctly classified at threshold delta when
its predicted label is right and its best known-class confidence exceeds
delta. An unknown sample counts as a false positive when it is given any
known label with confidence above delta. Biased evaluation uses every
unknown (KUC and UUC) in the denominator, unbiased evaluation only UUCs.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .base import ScoreBatch
from .data import KC, KUC, UNKNOWN, UUC, OpenSetDataset, SampleSet

REPORT_FPRS = (0.001, 0.01, 0.1)


class EvalMode(str, enum.Enum):
    BIASED = "biased"
    UNBIASED = "unbiased"


@dataclass(frozen=True)
class ScoreTable:
    role: np.ndarray  # KC / KUC / UUC
    truth: np.ndarray  # class id for KC rows, the role otherwise
    predicted: np.ndarray
    confidence: np.ndarray  # best known-class confidence
    unknown_confidence: np.ndarray

    def __post_init__(self):
        n = len(self.role)
        for name in ("truth", "predicted", "confidence", "unknown_confidence"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has the wrong length")
        if not (np.all(np.isfinite(self.confidence)) and np.all(np.isfinite(self.unknown_confidence))):
            raise ValueError("confidences must be finite")

    def __len__(self) -> int:
        return len(self.role)

    @classmethod
    def from_arrays(cls, role, truth, predicted, confidence, unknown_confidence=None):
        role = np.asarray(role, dtype=object)
        conf = np.asarray(confidence, dtype=np.float64)
        unk = np.zeros(len(conf)) if unknown_confidence is None else np.asarray(
            unknown_confidence, dtype=np.float64)
        return cls(role, np.asarray(truth, dtype=object), np.asarray(predicted, dtype=object),
                   conf, unk)

    def subset(self, idx) -> "ScoreTable":
        return ScoreTable(self.role[idx], self.truth[idx], self.predicted[idx],
                          self.confidence[idx], self.unknown_confidence[idx])

    def pools(self, mode) -> tuple[np.ndarray, np.ndarray]:
        mode = EvalMode(mode)
        known = self.role == KC
        if mode is EvalMode.BIASED:
            unknown = (self.role == KUC) | (self.role == UUC)
        else:
            unknown = self.role == UUC
        return known, unknown


def build_score_table(model, test: SampleSet | OpenSetDataset, roles=None) -> ScoreTable:
    """Score every test row; ``model`` is anything with ``score(X) -> ScoreBatch``."""
    if isinstance(test, OpenSetDataset):
        roles = test.test_roles
        test = test.test
    if roles is None:
        raise ValueError("test roles are required")
    roles = np.asarray(roles, dtype=object)
    sb: ScoreBatch = model.score(test.X)
    truth = np.where(roles == KC, test.labels, roles)
    return ScoreTable(roles, truth, sb.predicted, sb.max_known, sb.unknown)


@dataclass(frozen=True)
class Curve:
    delta: np.ndarray
    rate: np.ndarray  # CCR for OSCR, TPR for ROC
    fpr: np.ndarray
    n_known: int
    n_unknown: int
    kind: str = "oscr"

    def __len__(self) -> int:
        return len(self.delta)

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.delta.tolist(), self.rate.tolist(), self.fpr.tolist()))


def _count_above(sorted_vals: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    return len(sorted_vals) - np.searchsorted(sorted_vals, thresholds, side="right")


def _thresholds(values: np.ndarray) -> np.ndarray:
    return np.concatenate([[np.inf], np.unique(values)[::-1], [-np.inf]])


def _checked_pools(table: ScoreTable, mode):
    known, unknown = table.pools(mode)
    if not known.any():
        raise ValueError("no known rows to evaluate")
    if not unknown.any():
        raise ValueError(f"no unknown rows under {EvalMode(mode).value} evaluation")
    return known, unknown


def oscr_curve(table: ScoreTable, mode=EvalMode.BIASED) -> Curve:
    """CCR and FPR at every distinct confidence plus the two infinite sentinels.

    Points run from delta = +inf down to -inf, so FPR and CCR never decrease.
    """
    known, unknown = _checked_pools(table, mode)
    conf = table.confidence
    correct = known & (table.predicted == table.truth)
    accepted = unknown & (table.predicted != UNKNOWN)
    deltas = _thresholds(conf[known | unknown])
    nk, nu = int(known.sum()), int(unknown.sum())
    ccr = _count_above(np.sort(conf[correct]), deltas) / nk
    fpr = _count_above(np.sort(conf[accepted]), deltas) / nu
    return Curve(deltas, ccr, fpr, nk, nu, "oscr")


def roc_curve(table: ScoreTable, mode=EvalMode.BIASED) -> Curve:
    """Known-vs-unknown ROC with the best known-class confidence as score."""
    known, unknown = _checked_pools(table, mode)
    conf = table.confidence
    deltas = _thresholds(conf[known | unknown])
    nk, nu = int(known.sum()), int(unknown.sum())
    tpr = _count_above(np.sort(conf[known]), deltas) / nk
    fpr = _count_above(np.sort(conf[unknown]), deltas) / nu
    return Curve(deltas, tpr, fpr, nk, nu, "roc")


def auc(curve: Curve) -> float:
    """Trapezoidal area; over exact thresholds ties contribute one half."""
    return float(np.sum(np.diff(curve.fpr) * (curve.rate[1:] + curve.rate[:-1]) / 2.0))


def roc_auc(table: ScoreTable, mode=EvalMode.BIASED) -> tuple[Curve, float]:
    curve = roc_curve(table, mode)
    return curve, auc(curve)


def ccr_at_fpr(curve: Curve, target: float) -> float:
    """Rate at ``target`` FPR by linear interpolation between bracketing points.

    At an FPR reached by several points the best rate is used on the left of
    a segment and the worst on its right. Targets below the smallest FPR on
    the curve take the rate at that smallest FPR.
    """
    if len(curve) == 0:
        raise ValueError("empty curve")
    if not 0 <= target <= 1:
        raise ValueError("target FPR must lie in [0, 1]")
    fpr, rate = curve.fpr, curve.rate
    at = fpr == target
    if at.any():
        return float(rate[at].max())
    left = fpr < target
    if not left.any():
        return float(rate[fpr == fpr.min()].max())
    right = fpr > target
    if not right.any():
        return float(rate[fpr == fpr.max()].max())
    f0 = fpr[left].max()
    f1 = fpr[right].min()
    r0 = rate[fpr == f0].max()
    r1 = rate[fpr == f1].min()
    return float(r0 + (r1 - r0) * (target - f0) / (f1 - f0))


def fpr_support(curve: Curve, target: float) -> int:
    """How many unknown samples an FPR of ``target`` corresponds to."""
    return int(np.floor(target * curve.n_unknown + 1e-9))


def summarize(table: ScoreTable, mode, fprs=REPORT_FPRS) -> dict:
    oscr = oscr_curve(table, mode)
    roc, area = roc_auc(table, mode)
    return {
        "auc": area,
        "ccr_at_fpr": {f"{f:g}": ccr_at_fpr(oscr, f) for f in fprs},
        "fpr_support": {f"{f:g}": fpr_support(oscr, f) for f in fprs},
        "n_known": oscr.n_known,
        "n_unknown": oscr.n_unknown,
    }


def _fmt(v: float) -> str:
    return repr(float(v))


def export_curve(curve: Curve, path) -> None:
    header = ["delta", "ccr", "fpr"] if curve.kind == "oscr" else ["delta", "tpr", "fpr"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for d, r, f in curve.points():
            w.writerow([_fmt(d), _fmt(r), _fmt(f)])

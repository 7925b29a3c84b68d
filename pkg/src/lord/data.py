"""Sample collections, CSV ingestion, synthetic pools and KC/KUC/UUC splits."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

UNKNOWN = "u"

KC, KUC, UUC = "KC", "KUC", "UUC"


class ParseError(ValueError):
    """Malformed feature file."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class SplitConfigError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SampleSet:
    """Feature matrix with one label per row.

    ``labels`` holds class identifiers (str) or the unknown marker ``"u"``.
    ``origin`` optionally keeps the source class id of every row, which is
    what split audits use to prove no unseen class leaked into training.
    """

    X: np.ndarray
    labels: np.ndarray
    origin: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, copy=True)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 0)
        if X.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        labels = np.array([str(v) for v in self.labels], dtype=object)
        if labels.shape != (X.shape[0],):
            raise ValueError("one label per feature row required")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "labels", _frozen(labels))
        if self.origin is not None:
            origin = np.array([str(v) for v in self.origin], dtype=object)
            if origin.shape != labels.shape:
                raise ValueError("origin must align with labels")
            object.__setattr__(self, "origin", _frozen(origin))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def unknown_mask(self) -> np.ndarray:
        return self.labels == UNKNOWN

    def classes(self) -> tuple[str, ...]:
        """Distinct non-unknown labels in first-appearance order."""
        seen = dict.fromkeys(l for l in self.labels if l != UNKNOWN)
        return tuple(seen)

    def subset(self, idx) -> "SampleSet":
        idx = np.asarray(idx)
        origin = None if self.origin is None else self.origin[idx]
        return SampleSet(self.X[idx], self.labels[idx], origin)

    def known_only(self) -> "SampleSet":
        return self.subset(np.flatnonzero(~self.unknown_mask))

    @staticmethod
    def concat(parts: Sequence["SampleSet"]) -> "SampleSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            raise ValueError("nothing to concatenate")
        origin = None
        if all(p.origin is not None for p in parts):
            origin = np.concatenate([p.origin for p in parts])
        return SampleSet(
            np.vstack([p.X for p in parts]),
            np.concatenate([p.labels for p in parts]),
            origin,
        )


def load_features(path, fmt: str = "csv", header: bool = False) -> SampleSet:
    """Read ``label,f0,...,f{D-1}`` rows. The token ``u`` marks an unknown."""
    if fmt != "csv":
        raise ValueError(f"unsupported format {fmt!r}")
    labels, rows = [], []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
                if width < 2:
                    raise ParseError("need a label and at least one feature", lineno)
            elif len(row) != width:
                raise ParseError(f"expected {width} columns, found {len(row)}", lineno)
            try:
                feats = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric feature ({exc})", lineno) from None
            if not all(math.isfinite(v) for v in feats):
                raise ParseError("non-finite feature", lineno)
            labels.append(row[0].strip())
            rows.append(feats)
    if not rows:
        raise ParseError(f"{path}: no samples")
    return SampleSet(np.array(rows), labels)


def save_features(samples: SampleSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for lab, x in zip(samples.labels, samples.X):
            w.writerow([lab, *(repr(float(v)) for v in x)])


def synth_blobs(n_classes: int, per_class: int, dim: int, spread: float, seed: int,
                separation: float = 10.0) -> SampleSet:
    """Isotropic Gaussian blobs around centers at least ``separation`` apart."""
    if n_classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("counts must be >= 1")
    if spread <= 0:
        raise ValueError("spread must be > 0")
    rng = np.random.default_rng(seed)
    side = separation * max(2.0, 2.0 * n_classes ** (1.0 / dim))
    centers: list[np.ndarray] = []
    for _ in range(100_000):
        if len(centers) == n_classes:
            break
        c = rng.uniform(-side, side, size=dim)
        if all(np.linalg.norm(c - o) >= separation for o in centers):
            centers.append(c)
    else:
        raise RuntimeError("could not place blob centers")
    X = np.vstack([c + spread * rng.standard_normal((per_class, dim)) for c in centers])
    labels = np.repeat([f"c{k}" for k in range(n_classes)], per_class)
    return SampleSet(X, labels, labels)


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class SplitSpec:
    n_kc: int
    n_kuc: int
    n_uuc: int
    samples_per_class: int | tuple[int, int] | None = None
    kuc_to_kc_sample_ratio: float = 0.33
    seed: int = 0
    test_fraction: float = 0.5

    def __post_init__(self):
        if min(self.n_kc, self.n_kuc, self.n_uuc) < 1:
            raise SplitConfigError("class counts must be positive")
        if not self.kuc_to_kc_sample_ratio > 0:
            raise SplitConfigError("KUC ratio must be > 0")
        if not 0 < self.test_fraction < 1:
            raise SplitConfigError("test_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class OpenSetDataset:
    train: SampleSet
    test: SampleSet
    test_roles: np.ndarray
    known_classes: tuple[str, ...]
    roles: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        roles = np.array([str(r) for r in self.test_roles], dtype=object)
        if roles.shape != (len(self.test),):
            raise ValueError("one role per test row required")
        if not set(roles) <= {KC, KUC, UUC}:
            raise ValueError(f"unknown test roles {set(roles) - {KC, KUC, UUC}}")
        object.__setattr__(self, "test_roles", _frozen(roles))
        kcs = set(self.known_classes)
        train_known = set(self.train.classes())
        if not train_known <= kcs:
            raise ValueError(f"train labels outside known classes: {train_known - kcs}")
        test_known = set(self.test.labels[roles == KC])
        if not test_known <= kcs:
            raise ValueError(f"test KC labels outside known classes: {test_known - kcs}")
        if self.train.origin is not None and self.roles:
            leaked = {o for o in self.train.origin if self.roles.get(o) == UUC}
            if leaked:
                raise ValueError(f"UUC classes present in train: {sorted(leaked)}")


def _class_counts(spec: SplitSpec, n_avail: int, rng: np.random.Generator) -> int:
    s = spec.samples_per_class
    if s is None:
        return n_avail
    if isinstance(s, int):
        return min(s, n_avail)
    lo, hi = s
    return min(int(rng.integers(lo, hi + 1)), n_avail)


def make_split(pool: SampleSet, spec: SplitSpec) -> OpenSetDataset:
    """Partition the pool's classes into KC/KUC/UUC roles and build train/test sets."""
    classes = sorted(pool.classes())
    need = spec.n_kc + spec.n_kuc + spec.n_uuc
    if len(classes) < need:
        raise SplitConfigError(f"pool has {len(classes)} classes, split needs {need}")
    rng = np.random.default_rng(spec.seed)
    order = [classes[i] for i in rng.permutation(len(classes))]
    kcs = order[: spec.n_kc]
    kucs = order[spec.n_kc: spec.n_kc + spec.n_kuc]
    uucs = order[spec.n_kc + spec.n_kuc: need]
    roles = {c: KC for c in kcs} | {c: KUC for c in kucs} | {c: UUC for c in uucs}

    train_idx, kuc_candidates = [], []
    test_idx, test_roles = [], []
    for c in order[:need]:
        idx = np.flatnonzero(pool.labels == c)
        idx = idx[rng.permutation(len(idx))][: _class_counts(spec, len(idx), rng)]
        n_test = round_half_away(spec.test_fraction * len(idx))
        test_part, train_part = idx[:n_test], idx[n_test:]
        test_idx.extend(test_part)
        test_roles.extend([roles[c]] * len(test_part))
        if roles[c] == KC:
            train_idx.extend(train_part)
        elif roles[c] == KUC:
            kuc_candidates.extend(train_part)

    n_kuc_train = round_half_away(spec.kuc_to_kc_sample_ratio * len(train_idx))
    if n_kuc_train > len(kuc_candidates):
        raise SplitConfigError(
            f"ratio {spec.kuc_to_kc_sample_ratio} needs {n_kuc_train} KUC samples, "
            f"only {len(kuc_candidates)} available"
        )
    if n_kuc_train < 1:
        raise SplitConfigError("ratio yields zero KUC training samples")
    kuc_candidates = np.asarray(kuc_candidates)
    kuc_train = np.sort(kuc_candidates[rng.permutation(len(kuc_candidates))[:n_kuc_train]])

    kc_train = pool.subset(np.asarray(train_idx))
    kuc_part = pool.subset(kuc_train)
    train = SampleSet.concat([
        kc_train,
        SampleSet(kuc_part.X, [UNKNOWN] * len(kuc_part), kuc_part.origin),
    ])
    test_src = pool.subset(np.asarray(test_idx))
    test_roles = np.array(test_roles, dtype=object)
    test_labels = np.where(test_roles == KC, test_src.labels, UNKNOWN)
    origin = test_src.origin if test_src.origin is not None else test_src.labels
    test = SampleSet(test_src.X, test_labels, origin)
    if pool.origin is None:
        train = SampleSet(train.X, train.labels,
                          np.concatenate([kc_train.labels, pool.labels[kuc_train]]))
    return OpenSetDataset(train, test, test_roles, tuple(kcs), roles, spec.seed)


def write_manifest(ds: OpenSetDataset, path) -> None:
    doc = {
        "seed": ds.seed,
        "known_classes": list(ds.known_classes),
        "roles": {c: ds.roles[c] for c in sorted(ds.roles)},
        "n_train": len(ds.train),
        "n_test": len(ds.test),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def toy_benchmark(per_class: int = 200, seed: int = 0, test_fraction: float = 0.5,
                  kc_spread: float = 0.75) -> OpenSetDataset:
    """2-D toy: three Gaussian KCs, a KUC ring around them, one remote UUC blob."""
    rng = np.random.default_rng(seed)
    centers = {"k0": (0.0, 1.5), "k1": (-1.3, -0.75), "k2": (1.3, -0.75)}
    parts = {c: np.asarray(m) + kc_spread * rng.standard_normal((per_class, 2))
             for c, m in centers.items()}
    theta = rng.uniform(0, 2 * np.pi, per_class)
    radius = 3.5 + 0.25 * rng.standard_normal(per_class)
    parts["ring"] = np.c_[radius * np.cos(theta), radius * np.sin(theta)]
    parts["far"] = np.array([6.0, 5.0]) + 0.6 * rng.standard_normal((per_class, 2))
    roles = {"k0": KC, "k1": KC, "k2": KC, "ring": KUC, "far": UUC}

    n_test = round_half_away(test_fraction * per_class)
    train_parts, test_parts, test_roles = [], [], []
    for c, X in parts.items():
        test_parts.append(SampleSet(X[:n_test], [c if roles[c] == KC else UNKNOWN] * n_test,
                                    [c] * n_test))
        test_roles += [roles[c]] * n_test
        if roles[c] != UUC:
            rest = X[n_test:]
            lab = c if roles[c] == KC else UNKNOWN
            train_parts.append(SampleSet(rest, [lab] * len(rest), [c] * len(rest)))
    return OpenSetDataset(
        SampleSet.concat(train_parts), SampleSet.concat(test_parts),
        np.array(test_roles, dtype=object), ("k0", "k1", "k2"), roles, seed,
    )

"""Experiment orchestration: config, grid search, end-to-end runs and report export."""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from .data import (UNKNOWN, OpenSetDataset, SampleSet, SplitSpec, load_features,
                   make_split, synth_blobs, toy_benchmark)
from .evm import EvmConfig, cevm_reduce, fit_evm
from .linear import TrainConfig, fit_linear
from .metrics import EvalMode, build_score_table, export_curve, oscr_curve, roc_auc, summarize
from .mixup import MixupConfig, centroid_stats, generate_mixups
from .osnn import fit_osnn
from .strategy import StrategyKind, StrategyView, UnsupportedStrategy, apply_strategy
from .svm import SvmParams, fit_pisvm, fit_wsvm

logger = logging.getLogger(__name__)

GENUINE, MIXUP = "genuine", "mixup"


def derive_seed(master: int, *coords) -> int:
    """Stable 63-bit seed from the master seed and cell coordinates."""
    blob = json.dumps([int(master), *coords], sort_keys=True, default=str).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") & (2**63 - 1)


# -- model families ---------------------------------------------------------

@dataclass(frozen=True)
class Family:
    name: str
    fit: Callable[[StrategyView, dict, int], Any]
    strategies: frozenset


def _fit_osnn(view, params, seed):
    return fit_osnn(view)


def _fit_linear(view, params, seed):
    return fit_linear(view, TrainConfig(**{**params, "seed": seed}))


def _fit_evm(view, params, seed):
    return fit_evm(view, EvmConfig(**params))


def _fit_cevm(view, params, seed):
    cfg = EvmConfig(**params)
    return fit_evm(cevm_reduce(view, cfg), cfg)


def _fit_wsvm(view, params, seed):
    return fit_wsvm(view, SvmParams(**params))


def _fit_pisvm(view, params, seed):
    return fit_pisvm(view, SvmParams(**params))


_ALL = frozenset(StrategyKind)
_NO_MPL = _ALL - {StrategyKind.MPL}

FAMILIES = {
    "osnn": Family("osnn", _fit_osnn, _ALL),
    "linear": Family("linear", _fit_linear, _NO_MPL),
    "evm": Family("evm", _fit_evm, _ALL),
    "cevm": Family("cevm", _fit_cevm, _ALL),
    "wsvm": Family("wsvm", _fit_wsvm, _NO_MPL),
    "pisvm": Family("pisvm", _fit_pisvm, _NO_MPL),
}


def get_family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown model family {name!r}; choose from {sorted(FAMILIES)}") from None


def train_model(family: str, view: StrategyView, params: dict | None = None, seed: int = 0):
    fam = get_family(family)
    if view.kind not in fam.strategies:
        raise UnsupportedStrategy(f"{family} does not support {view.kind.value}")
    return fam.fit(view, dict(params or {}), seed)


# -- grid search ------------------------------------------------------------

def lattice(grid: dict) -> list[dict]:
    if not grid:
        return [{}]
    keys = list(grid)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in grid.values()]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    """Validation index sets. Falls back to plain shuffled folds for sparse classes."""
    labels = np.asarray(labels, dtype=object)
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < k:
        logger.warning("a class has fewer than %d samples; using unstratified folds", k)
        return [np.sort(f) for f in np.array_split(rng.permutation(len(labels)), k)]
    fold_of = np.empty(len(labels), dtype=int)
    offset = 0
    for c in classes:
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return [np.flatnonzero(fold_of == f) for f in range(k)]


@dataclass
class GridResult:
    best: dict
    scores: list
    stratified: bool


def grid_search(family: str, grid: dict, train: StrategyView, folds: int = 5,
                seed: int = 0) -> GridResult:
    """Closed-set CV accuracy of the baseline model for every lattice point.

    The first point in lattice order wins ties. A one-point lattice returns
    immediately without any training.
    """
    if not grid or any(isinstance(v, (list, tuple)) and len(v) == 0 for v in grid.values()):
        raise ValueError("empty parameter grid")
    points = lattice(grid)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if len(points) == 1:
        return GridResult(points[0], [None], True)

    keep = [i for i, l in enumerate(train.labels) if l != UNKNOWN and not train.is_pseudo(l)]
    base = SampleSet(train.X[keep], [train.labels[i] for i in keep])
    counts = np.unique(base.labels, return_counts=True)[1]
    val_sets = stratified_folds(base.labels, folds, seed)
    stratified = counts.min() >= folds

    scores = []
    for params in points:
        accs = []
        for f, val in enumerate(val_sets):
            tr = np.setdiff1d(np.arange(len(base)), val)
            try:
                view = apply_strategy(base.subset(tr), StrategyKind.BASELINE,
                                      train.known_classes)
                model = train_model(family, view, params, derive_seed(seed, f))
                pred = model.score(base.X[val])
                best = np.asarray(pred.classes, dtype=object)[pred.known.argmax(axis=1)]
                accs.append(float(np.mean(best == base.labels[val])))
            except Exception as exc:  # a failing point must not sink the search
                logger.warning("grid point %s fold %d failed: %s", params, f, exc)
                accs.append(float("-inf"))
        scores.append(float(np.mean(accs)))
    finite = [s for s in scores if np.isfinite(s)]
    if not finite:
        raise RuntimeError(f"every grid point failed for {family}")
    best_i = int(np.argmax(scores))  # argmax keeps the first maximum
    return GridResult(points[best_i], scores, bool(stratified))


# -- configuration ----------------------------------------------------------

@dataclass
class ExperimentConfig:
    dataset: dict
    models: list
    strategies: list
    split: dict | None = None
    mixup: dict | None = None
    eval_modes: list = field(default_factory=lambda: ["biased", "unbiased"])
    repeats: int = 1
    seed: int = 0
    grid_folds: int = 5

    def __post_init__(self):
        if not self.models:
            raise ValueError("config lists no models")
        if not self.strategies:
            raise ValueError("config lists no strategies")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        for m in self.models:
            get_family(m["family"])
        for s in self.strategies:
            StrategyKind.parse(s)
        for e in self.eval_modes:
            EvalMode(e)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        doc["models"] = [m if isinstance(m, dict) else {"family": m} for m in doc.get("models", [])]
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        ds = doc.get("dataset", {})
        if "path" in ds and not Path(ds["path"]).is_absolute():
            ds["path"] = str((Path(path).parent / ds["path"]).resolve())
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def bundled_config(name: str = "toy") -> Path:
    return Path(__file__).parent / "configs" / f"{name}.yaml"


def build_dataset(cfg: ExperimentConfig, seed: int) -> OpenSetDataset:
    ds = dict(cfg.dataset)
    kind = ds.pop("kind", "toy")
    if kind == "toy":
        return toy_benchmark(seed=seed, **ds)
    if kind == "blobs":
        pool = synth_blobs(seed=seed, **ds)
    elif kind == "csv":
        pool = load_features(ds["path"], header=ds.get("header", False))
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    split = dict(cfg.split or {})
    spc = split.pop("samples_per_class", None)
    if isinstance(spc, list):
        spc = tuple(spc)
    return make_split(pool, SplitSpec(samples_per_class=spc, seed=seed, **split))


# -- running ----------------------------------------------------------------

@dataclass
class Cell:
    family: str
    strategy: str
    source: str
    ratio: float | None
    alpha: float | None
    repeat: int
    status: str = "ok"
    error: str | None = None
    params: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    mixup: dict | None = None

    @property
    def key(self) -> tuple:
        return (self.family, self.strategy, self.source, self.ratio, self.alpha)

    @property
    def cell_id(self) -> str:
        parts = [self.family, self.strategy, self.source]
        if self.source == MIXUP:
            parts += [f"r{self.ratio:g}", f"a{self.alpha:g}"]
        parts.append(f"rep{self.repeat}")
        return re.sub(r"[^A-Za-z0-9_.-]", "_", "-".join(parts))

    def to_json(self) -> dict:
        return {
            "id": self.cell_id,
            "family": self.family,
            "strategy": self.strategy,
            "source": self.source,
            "ratio": self.ratio,
            "alpha": self.alpha,
            "repeat": self.repeat,
            "status": self.status,
            "error": self.error,
            "params": self.params,
            "metrics": self.metrics,
            "curve_files": {m: {k: f"curves/{self.cell_id}_{m}_{k}.csv" for k in ("oscr", "roc")}
                            for m in self.metrics},
            "mixup": self.mixup,
        }


@dataclass
class RunReport:
    config: dict
    digest: str
    seed: int
    cells: list
    wall_time: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.status != "error" for c in self.cells)

    def summary(self) -> list[dict]:
        groups: dict = {}
        for c in self.cells:
            if c.status == "ok":
                groups.setdefault(c.key, []).append(c)
        rows = []
        for key, cells in groups.items():
            row = dict(zip(("family", "strategy", "source", "ratio", "alpha"), key))
            row["repeats"] = len(cells)
            row["metrics"] = {}
            for mode in cells[0].metrics:
                flat = [_flatten(c.metrics[mode]) for c in cells]
                row["metrics"][mode] = {k: float(np.mean([f[k] for f in flat])) for k in flat[0]}
            rows.append(row)
        return rows

    def gains(self) -> list[dict]:
        """Every summary row minus its family's genuine-data baseline, per metric."""
        rows = self.summary()
        base = {(r["family"]): r for r in rows
                if r["strategy"] == StrategyKind.BASELINE.value and r["source"] == GENUINE}
        out = []
        for r in rows:
            b = base.get(r["family"])
            if b is None:
                continue
            for mode, vals in r["metrics"].items():
                for metric, v in vals.items():
                    out.append({
                        "family": r["family"], "strategy": r["strategy"], "source": r["source"],
                        "ratio": r["ratio"], "alpha": r["alpha"], "mode": mode,
                        "metric": metric, "gain": v - b["metrics"][mode][metric],
                    })
        return out

    def to_json(self) -> dict:
        return {
            "config_digest": self.digest,
            "seed": self.seed,
            "config": self.config,
            "cells": [c.to_json() for c in self.cells],
            "summary": self.summary(),
            "all_ok": self.ok,
        }


def _flatten(m: dict) -> dict:
    out = {"auc": m["auc"]}
    for f, v in m["ccr_at_fpr"].items():
        out[f"ccr@{f}"] = v
    return out


def _evaluate(cell: Cell, model, ds: OpenSetDataset, modes) -> None:
    table = build_score_table(model, ds)
    for mode in modes:
        cell.metrics[mode] = summarize(table, mode)
        cell.curves[mode] = {"oscr": oscr_curve(table, mode), "roc": roc_auc(table, mode)[0]}


def _family_cells(cfg: ExperimentConfig, repeat: int, mspec: dict) -> list[Cell]:
    family = mspec["family"]
    fam = get_family(family)
    ds = build_dataset(cfg, derive_seed(cfg.seed, "split", repeat))
    strategies = [StrategyKind.parse(s) for s in cfg.strategies]
    mix = cfg.mixup or {}
    mix_strategies = [StrategyKind.parse(s) for s in mix.get("strategies", cfg.strategies)]
    mix_strategies = [s for s in mix_strategies if s is not StrategyKind.BASELINE]

    plan = [(s, GENUINE, None, None) for s in strategies]
    for ratio in mix.get("ratios", []):
        for alpha in mix.get("alphas", [0.0]):
            plan += [(s, MIXUP, float(ratio), float(alpha)) for s in mix_strategies]
    cells = [Cell(family, s.value, src, r, a, repeat) for s, src, r, a in plan]

    try:
        base_view = apply_strategy(ds.train, StrategyKind.BASELINE, ds.known_classes)
        grid = mspec.get("grid") or {}
        params = dict(mspec.get("params") or {})
        if grid:
            params |= grid_search(family, grid, base_view, cfg.grid_folds,
                                  derive_seed(cfg.seed, "grid", family, repeat)).best
    except Exception as exc:
        for c in cells:
            c.status, c.error = "error", f"grid search: {type(exc).__name__}: {exc}"
        return cells

    known_train = ds.train.known_only()
    stats = None
    for cell, (kind, src, ratio, alpha) in zip(cells, plan):
        cell.params = params
        if kind not in fam.strategies:
            cell.status, cell.error = "skipped", f"{family} does not support {kind.value}"
            continue
        try:
            train = ds.train
            if src == MIXUP:
                stats = stats or centroid_stats(known_train)
                mcfg = MixupConfig(**{k: v for k, v in mix.items()
                                      if k in ("beta_a", "beta_b", "lam_low", "lam_high",
                                               "budget_factor")},
                                   ratio=ratio, alpha=alpha,
                                   seed=derive_seed(cfg.seed, "mixup", ratio, alpha, repeat))
                batch = generate_mixups(known_train, stats, mcfg)
                cell.mixup = batch.summary()
                train = SampleSet.concat([known_train, batch.as_samples()]) if len(batch) \
                    else known_train
            view = apply_strategy(train, kind, ds.known_classes)
            seed = derive_seed(cfg.seed, "train", family, kind.value, src, ratio, alpha, repeat)
            model = train_model(family, view, params, seed)
            _evaluate(cell, model, ds, cfg.eval_modes)
        except Exception as exc:
            logger.warning("cell %s failed: %s", cell.cell_id, exc)
            cell.status, cell.error = "error", f"{type(exc).__name__}: {exc}"
            cell.metrics, cell.curves = {}, {}
    return cells


def _timed(args):
    cfg, repeat, mspec = args
    t0 = time.perf_counter()
    cells = _family_cells(cfg, repeat, mspec)
    return cells, time.perf_counter() - t0


def run_experiment(cfg: ExperimentConfig, out_dir=None, jobs: int = 1) -> RunReport:
    """Run every (repeat, family) group; results do not depend on ``jobs``."""
    tasks = [(cfg, r, m) for r in range(cfg.repeats) for m in cfg.models]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_timed, tasks))
    else:
        results = [_timed(t) for t in tasks]
    cells, wall = [], {}
    for (_, r, m), (group, secs) in zip(tasks, results):
        cells.extend(group)
        wall[f"{m['family']}-rep{r}"] = secs
    report = RunReport(cfg.to_dict(), cfg.digest(), cfg.seed, cells, wall)
    if out_dir is not None:
        export_report(report, out_dir)
    return report


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def export_report(report: RunReport, path) -> list[Path]:
    """Write curves, then the gain table, then ``report.json``; returns the files written.

    Wall-clock timings go to ``timings.json`` so the report itself stays
    byte-identical across reruns.
    """
    out = Path(path)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    written = []
    for cell in report.cells:
        for mode, curves in cell.curves.items():
            for kind, curve in curves.items():
                f = out / "curves" / f"{cell.cell_id}_{mode}_{kind}.csv"
                export_curve(curve, f)
                written.append(f)
    gains = out / "gains.csv"
    with open(gains, "w", newline="", encoding="utf-8") as fh:
        cols = ["family", "strategy", "source", "ratio", "alpha", "mode", "metric", "gain"]
        w = csv.DictWriter(fh, cols, lineterminator="\n")
        w.writeheader()
        for row in report.gains():
            w.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float)
                            else row[k]) for k in cols})
    written.append(gains)
    doc = report.to_json()
    for c in doc["cells"]:
        for files in c["curve_files"].values():
            for rel in files.values():
                if not (out / rel).exists():
                    raise FileNotFoundError(f"curve file {rel} missing at report write time")
    rep = out / "report.json"
    rep.write_text(_dumps(doc), encoding="utf-8")
    written.append(rep)
    (out / "timings.json").write_text(_dumps(report.wall_time), encoding="utf-8")
    return written

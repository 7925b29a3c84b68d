"""Command-line entry point: ``lord {split,train,eval,mixup,sweep,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import pickle
import sys
from pathlib import Path

import numpy as np

from .data import OpenSetDataset, load_features, save_features, write_manifest
from .harness import (ExperimentConfig, RunReport, build_dataset, bundled_config, derive_seed,
                      export_report, get_family, grid_search, run_experiment, train_model)
from .linear import LinearModel
from .metrics import build_score_table, export_curve, oscr_curve, roc_auc, summarize
from .mixup import MixupConfig, centroid_stats, export_batch, generate_mixups
from .strategy import StrategyKind, apply_strategy

logger = logging.getLogger("lord")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config or bundled_config())
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_split(split_dir) -> OpenSetDataset:
    d = Path(split_dir)
    manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    roles = (d / "test_roles.txt").read_text(encoding="utf-8").split()
    return OpenSetDataset(load_features(d / "train.csv"), load_features(d / "test.csv"),
                          np.array(roles, dtype=object), tuple(manifest["known_classes"]),
                          manifest["roles"], manifest["seed"])


def cmd_split(args) -> int:
    cfg = _config(args)
    ds = build_dataset(cfg, derive_seed(cfg.seed, "split", args.repeat))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_features(ds.train, out / "train.csv")
    save_features(ds.test, out / "test.csv")
    (out / "test_roles.txt").write_text("\n".join(ds.test_roles) + "\n", encoding="utf-8")
    write_manifest(ds, out / "manifest.json")
    print(f"split: {len(ds.train)} train / {len(ds.test)} test rows -> {out}")
    return 0


def _params_for(cfg: ExperimentConfig, family: str, view, seed: int) -> dict:
    for m in cfg.models:
        if m["family"] == family:
            params = dict(m.get("params") or {})
            if m.get("grid"):
                params |= grid_search(family, m["grid"], view, cfg.grid_folds, seed).best
            return params
    return {}


def cmd_train(args) -> int:
    cfg = _config(args)
    get_family(args.family)
    ds = _load_split(args.split)
    kind = StrategyKind.parse(args.strategy)
    base = apply_strategy(ds.train, StrategyKind.BASELINE, ds.known_classes)
    params = _params_for(cfg, args.family, base, derive_seed(cfg.seed, "grid", args.family))
    view = apply_strategy(ds.train, kind, ds.known_classes)
    model = train_model(args.family, view, params, derive_seed(cfg.seed, "train", args.family,
                                                                kind.value))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(model, LinearModel):
        path = out / "model.txt"
        model.save(path)
    else:
        path = out / "model.pkl"
        with open(path, "wb") as fh:
            pickle.dump(model, fh)
    _write_json(out / "model.json", {"family": args.family, "strategy": kind.value,
                                     "params": params, "file": path.name})
    print(f"train: {args.family}/{kind.value} -> {path}")
    return 0


def _load_model(path: Path):
    if path.suffix == ".txt":
        return LinearModel.load(path)
    with open(path, "rb") as fh:
        return pickle.load(fh)


def cmd_eval(args) -> int:
    model_path = Path(args.model)
    if model_path.is_dir():
        meta = json.loads((model_path / "model.json").read_text(encoding="utf-8"))
        model_path = model_path / meta["file"]
    model = _load_model(model_path)
    ds = _load_split(args.split)
    table = build_score_table(model, ds)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = {}
    for mode in args.modes:
        metrics[mode] = summarize(table, mode)
        export_curve(oscr_curve(table, mode), out / f"{mode}_oscr.csv")
        export_curve(roc_auc(table, mode)[0], out / f"{mode}_roc.csv")
        print(f"eval {mode}: auc={metrics[mode]['auc']:.4f} "
              f"ccr@0.1={metrics[mode]['ccr_at_fpr']['0.1']:.4f}")
    _write_json(out / "metrics.json", metrics)
    return 0


def cmd_mixup(args) -> int:
    cfg = _config(args)
    ds = build_dataset(cfg, derive_seed(cfg.seed, "split", 0))
    known = ds.train.known_only()
    mcfg = MixupConfig(ratio=args.ratio, alpha=args.alpha, seed=cfg.seed)
    batch = generate_mixups(known, centroid_stats(known), mcfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    export_batch(batch, out / "mixups.csv", out / "mixups.json")
    s = batch.summary()
    print(f"mixup: accepted {s['accepted']}/{s['target']} after {s['attempted']} attempts"
          + (f" (shortfall {s['shortfall']})" if s["shortfall"] else ""))
    return 0


def _print_summary(report: RunReport) -> None:
    for row in report.summary():
        where = row["source"] if row["source"] == "genuine" else \
            f"mixup r={row['ratio']:g} a={row['alpha']:g}"
        aucs = " ".join(f"{m}={v['auc']:.4f}" for m, v in row["metrics"].items())
        print(f"{row['family']:7s} {row['strategy']:8s} {where:22s} {aucs}")


def cmd_sweep(args) -> int:
    cfg = _config(args)
    report = run_experiment(cfg, args.out_dir, jobs=args.jobs)
    _print_summary(report)
    bad = [c for c in report.cells if c.status == "error"]
    for c in bad:
        print(f"error in {c.cell_id}: {c.error}", file=sys.stderr)
    return 0 if report.ok else 1


def cmd_report(args) -> int:
    doc = json.loads((Path(args.run_dir) / "report.json").read_text(encoding="utf-8"))
    status = {}
    for c in doc["cells"]:
        status[c["status"]] = status.get(c["status"], 0) + 1
    print(f"config {doc['config_digest']} seed {doc['seed']}: "
          + ", ".join(f"{n} {s}" for s, n in sorted(status.items())))
    for row in doc["summary"]:
        where = row["source"] if row["source"] == "genuine" else \
            f"mixup r={row['ratio']:g} a={row['alpha']:g}"
        aucs = " ".join(f"{m}={v['auc']:.4f}" for m, v in row["metrics"].items())
        print(f"{row['family']:7s} {row['strategy']:8s} {where:22s} {aucs}")
    return 0 if status.get("error", 0) == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (default: bundled toy)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out-dir", default="lord-out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lord", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("split", parents=[common], help="materialize a train/test split")
    s.add_argument("--repeat", type=int, default=0)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", parents=[common], help="train one model on a split")
    s.add_argument("--split", required=True, help="directory written by `split`")
    s.add_argument("--family", required=True)
    s.add_argument("--strategy", default="kvr")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="score a trained model on a split")
    s.add_argument("--split", required=True)
    s.add_argument("--model", required=True, help="model file or directory written by `train`")
    s.add_argument("--modes", nargs="+", default=["biased", "unbiased"])
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("mixup", parents=[common], help="generate one mixup batch")
    s.add_argument("--ratio", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=0.0)
    s.set_defaults(func=cmd_mixup)

    s = sub.add_parser("sweep", parents=[common], help="run the full experiment grid")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", parents=[common], help="summarize a finished run")
    s.add_argument("--run-dir", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"lord {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

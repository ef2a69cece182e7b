"""``dyadflow`` command line: extract, train-eval, ablate, importance, synth."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .dataset import DatasetError, LabeledDataset, assemble, load_dataset
from .eval import (
    ABLATION_SETS,
    METRICS,
    EvalReport,
    PipelineFlags,
    ablation,
    compare,
    cross_validate,
    importance_coef,
    importance_mdi,
    importance_shap,
)
from .features import FEATURE_NAMES, feature_set
from .models import NETWORK_KINDS, ModelConfig, ModelKind
from .synth import NO_BAND_EFFECT, SynthConfig, generate, write_dataset

log = logging.getLogger("dyadflow")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _shared(p: argparse.ArgumentParser, evaluation: bool = True) -> None:
    p.add_argument("--data-root", type=Path, help="dataset tree (with manifest.csv) or a feature CSV")
    p.add_argument("--out", type=Path, help="output file or directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    if not evaluation:
        return
    p.add_argument("--features", type=Path, help="feature CSV written by 'extract'")
    p.add_argument("--task", choices=("binary", "ternary"), default="binary")
    p.add_argument("--models", default=None, help="comma-separated kinds (LR,SVM,DT,RF,NN,DNN1,DNN2,DNN3) or 'all'")
    p.add_argument("--feature-set", default="all", help="'all', 'individual', 'synchrony' or groups like L+F+FS")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--paper-mode", action="store_true", help="normalize and SMOTE the whole dataset before splitting")
    p.add_argument("--group-folds", action="store_true", help="keep both rows of a dyad in the same fold")
    p.add_argument("--normalize-global", action="store_true", help="fit Z-score statistics on all rows")
    p.add_argument("--no-smote", action="store_true", help="train on the imbalanced folds")
    p.add_argument("--k-neighbors", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyadflow", description="Simultaneous-flow detection from dyadic EEG.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute the 272-column feature CSV from a dataset tree")
    _shared(p, evaluation=False)
    p.add_argument("--channel-map", type=Path, help="JSON list of the 14 channel names in row order")
    p.add_argument("--manifest", type=Path, help="defaults to <data-root>/manifest.csv")

    p = sub.add_parser("train-eval", help="cross-validate models and write JSON/CSV reports")
    _shared(p)
    p.add_argument("--compare-synchrony", action="store_true",
                   help="also run without synchrony features and t-test the difference per metric")

    p = sub.add_parser("ablate", help="cross-validate each feature-group union against the L baseline")
    _shared(p)
    p.add_argument("--sets", default=",".join(ABLATION_SETS), help="comma-separated feature-group unions")

    p = sub.add_parser("importance", help="rank features by LR coefficients, RF MDI or network SHAP values")
    _shared(p)
    p.add_argument("--method", choices=("coef", "mdi", "shap"), required=True)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--shap-samples", type=int, default=256)
    p.add_argument("--background", type=int, default=64, help="background rows per fold for SHAP")
    p.add_argument("--explain-rows", type=int, default=16, help="test rows explained per fold for SHAP")

    p = sub.add_parser("synth", help="write a synthetic dataset tree with planted effects")
    _shared(p, evaluation=False)
    p.add_argument("--pairs", type=int, default=47)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--samplings", type=int, default=5)
    p.add_argument("--coupling", type=float, default=0.8)
    p.add_argument("--no-band-effect", action="store_true")
    p.add_argument("--noise-floor", type=float, default=1.0)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _flags(args) -> PipelineFlags:
    if args.paper_mode and args.group_folds:
        raise UsageError("--paper-mode and --group-folds are mutually exclusive")
    if args.paper_mode and args.normalize_global:
        raise UsageError("--paper-mode already normalizes globally; drop --normalize-global")
    if args.folds < 2:
        raise UsageError("--folds must be at least 2")
    return PipelineFlags(
        paper_mode=args.paper_mode,
        normalize_global=args.normalize_global,
        smote=not args.no_smote,
        k_neighbors=args.k_neighbors,
        group_folds=args.group_folds,
    )


def _models(spec: str | None, default: str) -> list[ModelKind]:
    spec = spec or default
    if spec.strip().lower() == "all":
        return list(ModelKind)
    try:
        return [ModelKind.parse(s) for s in spec.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_features(args) -> LabeledDataset:
    src = args.features or args.data_root
    if src is None:
        raise UsageError("give --features or --data-root")
    src = Path(src)
    if src.is_dir():
        if (src / "features.csv").exists():
            src = src / "features.csv"
        else:
            log.info("no features.csv under %s; extracting from the dataset tree", src)
            return assemble(load_dataset(src).dyads, jobs=args.jobs)
    if not src.exists():
        raise UsageError(f"feature file not found: {src}")
    return LabeledDataset.from_csv(src)


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolved_config(args, models) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    cfg["model_configs"] = {m.value: ModelConfig.default(m, seed=args.seed).to_dict() for m in models}
    cfg["version"] = __version__
    cfg["backend"] = BACKEND
    cfg["digest"] = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]
    return cfg


def _check_feature_set(name: str) -> None:
    try:
        feature_set(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _print_summary(report: EvalReport) -> None:
    print(f"{'model':<6} {'features':<12} " + " ".join(f"{m:>16}" for m in METRICS))
    for row in report.summary():
        cells = " ".join(f"{row[f'{m}_mean']:.4f} ± {row[f'{m}_std']:.4f}" for m in METRICS)
        print(f"{row['model']:<6} {row['feature_set']:<12} {cells}")


# ---------------------------------------------------------------------------
# commands


def cmd_extract(args) -> int:
    if args.data_root is None:
        raise UsageError("extract needs --data-root")
    t0 = time.perf_counter()
    loaded = load_dataset(args.data_root, args.manifest, args.channel_map)
    for note in loaded.skipped:
        print(f"skipped: {note}", file=sys.stderr)
    if not loaded.dyads:
        raise DatasetError("no complete dyads found")
    ds = assemble(loaded.dyads, jobs=args.jobs)
    out = Path(args.out) if args.out else Path(args.data_root) / "features.csv"
    if out.is_dir():
        out = out / "features.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out)
    flag_counts = Counter(f for row in ds.flags for f in row.split(";") if f)
    print(f"wrote {out}: {len(ds)} rows x {len(ds.feature_names)} feature columns "
          f"({len(loaded.dyads)} dyads, {time.perf_counter() - t0:.1f} s)")
    flagged = sum(1 for row in ds.flags if row)
    print(f"quality flags: {flagged} of {len(ds)} rows flagged")
    for flag, n in flag_counts.most_common(10):
        print(f"  {flag}: {n}")
    return 0


def cmd_train_eval(args) -> int:
    flags = _flags(args)
    models = _models(args.models, "RF")
    _check_feature_set(args.feature_set)
    ds = _load_features(args)
    report = EvalReport(_resolved_config(args, models))
    for kind in models:
        cfg = ModelConfig.default(kind)
        res = cross_validate(ds, args.task, cfg, args.folds, args.seed, flags, args.feature_set, args.jobs)
        report.results.append(res)
        if args.compare_synchrony:
            base = cross_validate(ds, args.task, cfg, args.folds, args.seed, flags, "individual", args.jobs)
            report.results.append(base)
            report.comparisons.extend(compare(res, base))
    out = _out_dir(args, "reports")
    report.to_json(out / "report.json")
    report.to_csv(out, "report")
    _print_summary(report)
    for c in report.comparisons:
        print(f"{c.model:<6} {c.metric:<9} {c.set_a} vs {c.set_b}: t = {c.statistic:.3f}, p = {c.p_value:.4g}")
    print(f"reports written to {out}")
    return 0


def cmd_ablate(args) -> int:
    flags = _flags(args)
    models = _models(args.models, "RF")
    sets = [s.strip() for s in args.sets.split(",") if s.strip()]
    if not sets:
        raise UsageError("empty --sets")
    for s in sets:
        _check_feature_set(s)
    ds = _load_features(args)
    rows, results = ablation(ds, args.task, models, sets, args.folds, args.seed, flags, jobs=args.jobs)
    report = EvalReport(_resolved_config(args, models), results=results, ablation=rows)
    out = _out_dir(args, "reports")
    report.to_json(out / "ablation.json")
    report.to_csv(out, "ablation")
    print(f"{'model':<6} {'feature set':<12} {'n':>4} " + " ".join(f"{m:>9} {'Δpp':>7}" for m in METRICS))
    for r in rows:
        cells = " ".join(f"{r.means[m]:9.4f} {r.deltas[m]:+7.2f}" for m in METRICS)
        print(f"{r.model:<6} {r.feature_set:<12} {r.n_features:>4} {cells}")
    return 0


_METHOD_KINDS = {"coef": ({ModelKind.LR}, "LR"), "mdi": ({ModelKind.RF}, "RF"), "shap": (NETWORK_KINDS, "NN")}


def cmd_importance(args) -> int:
    flags = _flags(args)
    allowed, default = _METHOD_KINDS[args.method]
    models = _models(args.models, default)
    bad = [m.value for m in models if m not in allowed]
    if bad:
        need = {"coef": "LR", "mdi": "RF", "shap": "a network (NN, DNN1, DNN2, DNN3)"}[args.method]
        raise UsageError(f"--method {args.method} requires {need}, got {', '.join(bad)}")
    if args.top_k < 1:
        raise UsageError("--top-k must be positive")
    _check_feature_set(args.feature_set)
    ds = _load_features(args)
    report = EvalReport(_resolved_config(args, models))
    for kind in models:
        res = cross_validate(ds, args.task, ModelConfig.default(kind), args.folds, args.seed, flags,
                             args.feature_set, args.jobs, keep_models=True)
        report.results.append(res)
        names = feature_set(args.feature_set)
        if args.method == "coef":
            rank = importance_coef(res.models, names, ds.select(names).X)
        elif args.method == "mdi":
            rank = importance_mdi(res.models, names)
        else:
            rng = np.random.default_rng(args.seed)
            bgs, exs = [], []
            for Xtr, Xte in res.fold_inputs:
                bgs.append(Xtr[rng.choice(Xtr.shape[0], size=min(args.background, Xtr.shape[0]), replace=False)])
                exs.append(Xte[: args.explain_rows])
            rank = importance_shap(res.models, bgs, exs, names, args.shap_samples, args.seed)
        rank.method = f"{args.method}:{kind.value}"
        report.importance.append(rank)
    out = _out_dir(args, "reports")
    report.to_json(out / f"importance_{args.method}.json", args.top_k)
    report.to_csv(out, f"importance_{args.method}", args.top_k)
    for rank in report.importance:
        print(f"{rank.method} top {args.top_k}")
        for i, (name, score) in enumerate(rank.top(args.top_k), start=1):
            print(f"  {i:>3}  {name:<16} {score: .6g}")
    return 0


def cmd_synth(args) -> int:
    if args.out is None:
        raise UsageError("synth needs --out")
    try:
        config = SynthConfig(
            n_pairs=args.pairs,
            n_rounds=args.rounds,
            n_samplings=args.samplings,
            coupling=args.coupling,
            noise_floor=args.noise_floor,
            seed=args.seed,
            **({"band_effect": dict(NO_BAND_EFFECT)} if args.no_band_effect else {}),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data = generate(config)
    root = write_dataset(data, args.out)
    n_high = sum(t["binary_label"] for t in data.truth)
    print(f"wrote {len(data.dyads)} dyads ({n_high} High, {len(data.dyads) - n_high} Low) to {root}")
    return 0


COMMANDS = {
    "extract": cmd_extract,
    "train-eval": cmd_train_eval,
    "ablate": cmd_ablate,
    "importance": cmd_importance,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DatasetError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Cross-validation, metrics, paired t-tests, feature importance and ablation."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .dataset import LabeledDataset, smote, zscore_apply, zscore_fit
from .features import feature_set
from .models import (
    ModelConfig,
    ModelKind,
    TrainedModel,
    mdi,
    network_logits,
    predict,
    predict_scores,
    train,
)

log = logging.getLogger(__name__)

METRICS = ("accuracy", "precision", "recall", "f1")
ABLATION_SETS = ("L", "F", "L+F", "L+F+LS", "L+F+FS", "L+F+FS+LS")


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple  # tuple of sorted index arrays
    seed: int
    stratified: bool = False
    grouped: bool = False

    @property
    def k(self) -> int:
        return len(self.folds)

    @property
    def n_rows(self) -> int:
        return sum(f.shape[0] for f in self.folds)

    def split(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.folds[i]
        train_idx = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train_idx, test


def kfold(n_rows: int, k: int = 10, seed: int = 0, stratify_labels=None, groups=None) -> FoldPlan:
    """Seeded k-fold partition of ``range(n_rows)``.

    Plain: shuffle, then cut into contiguous chunks (the first ``n % k`` one
    longer). Stratified: shuffle within each class and deal members
    round-robin, continuing the deal across classes so total sizes also
    differ by at most one. Grouped: whole groups are assigned to folds, so
    rows sharing a group never straddle train and test.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n_rows:
        raise ValueError(f"cannot make {k} folds from {n_rows} rows")
    rng = np.random.default_rng(seed)
    if groups is not None:
        groups = np.asarray(groups)
        if groups.shape[0] != n_rows:
            raise ValueError("groups must have one entry per row")
        uniq, first = np.unique(groups, return_index=True)
        if k > uniq.shape[0]:
            raise ValueError(f"cannot make {k} folds from {uniq.shape[0]} groups")
        glabels = None if stratify_labels is None else np.asarray(stratify_labels)[first]
        gplan = kfold(uniq.shape[0], k, seed, glabels)
        members = {g: np.flatnonzero(groups == g) for g in uniq}
        folds = tuple(np.sort(np.concatenate([members[uniq[j]] for j in f])) for f in gplan.folds)
        return FoldPlan(folds, seed, stratify_labels is not None, True)
    if stratify_labels is None:
        perm = rng.permutation(n_rows)
        folds = tuple(np.sort(part) for part in np.array_split(perm, k))
        return FoldPlan(folds, seed, False, False)
    labels = np.asarray(stratify_labels)
    if labels.shape[0] != n_rows:
        raise ValueError("stratify_labels must have one entry per row")
    buckets = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == cls))
        for p, row in enumerate(members):
            buckets[(offset + p) % k].append(row)
        offset = (offset + members.shape[0]) % k
    folds = tuple(np.sort(np.array(b, dtype=np.intp)) for b in buckets)
    return FoldPlan(folds, seed, True, False)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: np.ndarray = field(repr=False, default=None)
    flags: tuple = ()

    def as_dict(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}


def confusion_matrix(predictions, truth, n_classes: int) -> np.ndarray:
    """``C[i, j]`` counts rows with truth ``i`` predicted as ``j``."""
    p = np.asarray(predictions, dtype=np.intp)
    t = np.asarray(truth, dtype=np.intp)
    if p.shape != t.shape:
        raise ValueError("predictions and truth differ in length")
    if p.size == 0:
        raise ValueError("metrics need at least one row")
    if p.min() < 0 or t.min() < 0 or p.max() >= n_classes or t.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    return np.bincount(t * n_classes + p, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def _harmonic(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def metrics_binary(predictions, truth) -> MetricSet:
    """Accuracy, precision, recall and F1 with label 1 (High) as positive."""
    C = confusion_matrix(predictions, truth, 2)
    tn, fp, fn, tp = C[0, 0], C[0, 1], C[1, 0], C[1, 1]
    flags: list = []
    p = _ratio(tp, tp + fp, "no_positive_predictions", flags)
    r = _ratio(tp, tp + fn, "no_positive_truth", flags)
    return MetricSet(float((tp + tn) / C.sum()), float(p), float(r), float(_harmonic(p, r)), C, tuple(flags))


def metrics_ternary(predictions, truth) -> MetricSet:
    """Macro precision and recall over three classes, F1 from those two,
    and accuracy as the fraction of rows on the diagonal."""
    C = confusion_matrix(predictions, truth, 3)
    flags: list = []
    tp = np.diag(C)
    ps = [_ratio(tp[i], C[:, i].sum(), f"class_{i}_never_predicted", flags) for i in range(3)]
    rs = [_ratio(tp[i], C[i, :].sum(), f"class_{i}_absent", flags) for i in range(3)]
    p, r = float(np.mean(ps)), float(np.mean(rs))
    return MetricSet(float(tp.sum() / C.sum()), p, r, float(_harmonic(p, r)), C, tuple(flags))


def metrics_for(task: str, predictions, truth) -> MetricSet:
    if task == "binary":
        return metrics_binary(predictions, truth)
    if task == "ternary":
        return metrics_ternary(predictions, truth)
    raise ValueError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# paired t-test


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    df: int
    p_value: float
    degenerate: bool = False


def paired_ttest_detail(a, b) -> TTestResult:
    """Two-sided paired t-test on ``a - b`` with ``n - 1`` degrees of freedom.

    When all differences are equal the statistic is undefined: p is 1.0 if
    they are all zero and 0.0 otherwise, and the result is marked degenerate.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired_ttest needs two equal-length 1-D sequences")
    n = a.shape[0]
    if n < 2:
        raise ValueError("paired_ttest needs at least 2 pairs")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0 or not np.isfinite(sd):
        if mean == 0:
            return TTestResult(0.0, n - 1, 1.0, True)
        return TTestResult(float(np.copysign(np.inf, mean)), n - 1, 0.0, True)
    t = mean / (sd / np.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), n - 1)
    return TTestResult(float(t), n - 1, float(min(1.0, p)), False)


def paired_ttest(a, b) -> float:
    return paired_ttest_detail(a, b).p_value


# ---------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class PipelineFlags:
    """Where normalization and SMOTE are fitted.

    Default: both inside each training fold. ``paper_mode`` balances and
    normalizes the whole dataset before splitting; ``normalize_global`` only
    moves normalization outside the folds.
    """

    paper_mode: bool = False
    normalize_global: bool = False
    smote: bool = True
    k_neighbors: int = 5
    stratify: bool = True
    group_folds: bool = False

    def __post_init__(self):
        if self.paper_mode and self.group_folds:
            raise ValueError("--paper-mode and --group-folds are mutually exclusive")


@dataclass
class FoldAudit:
    """Rows each fitted preprocessing step drew from, in dataset row indices."""

    fold: int
    train_rows: np.ndarray
    test_rows: np.ndarray
    norm_rows: np.ndarray
    smote_rows: np.ndarray

    @property
    def leaked_norm_rows(self) -> int:
        return int(np.isin(self.norm_rows, self.test_rows).sum())

    @property
    def leaked_smote_rows(self) -> int:
        return int(np.isin(self.smote_rows, self.test_rows).sum())

    def assert_clean(self) -> None:
        if self.leaked_norm_rows or self.leaked_smote_rows:
            raise AssertionError(
                f"fold {self.fold}: {self.leaked_norm_rows} normalization rows and "
                f"{self.leaked_smote_rows} SMOTE source rows come from the test fold"
            )


@dataclass
class CVResult:
    model: str
    feature_set: str
    task: str
    folds: list  # MetricSet per fold
    audits: list = field(default_factory=list, repr=False)
    models: list = field(default_factory=list, repr=False)
    test_rows: list = field(default_factory=list, repr=False)
    fold_inputs: list = field(default_factory=list, repr=False)  # (normalized train, normalized test)

    def values(self, metric: str) -> np.ndarray:
        return np.array([getattr(m, metric) for m in self.folds])

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values(metric)))

    def std(self, metric: str) -> float:
        v = self.values(metric)
        return float(np.std(v, ddof=1)) if v.shape[0] > 1 else 0.0


def _fold_seed(seed: int, fold: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, fold, stream]).generate_state(1)[0])


def _run_fold(job):
    (i, X, y, train_idx, test_idx, config, flags, task, seed, names, origin, keep) = job
    Xtr, ytr, Xte = X[train_idx], y[train_idx], X[test_idx]
    norm_rows = np.empty(0, dtype=np.intp)
    smote_rows = np.empty(0, dtype=np.intp)
    if not (flags.paper_mode or flags.normalize_global):
        st = zscore_fit(Xtr)
        Xtr, Xte = zscore_apply(st, Xtr), zscore_apply(st, Xte)
        norm_rows = origin[train_idx]
    inputs = (Xtr, Xte) if keep else None
    if flags.smote and not flags.paper_mode:
        Xtr, ytr, prov = smote(Xtr, ytr, flags.k_neighbors, _fold_seed(seed, i, 0), return_provenance=True)
        smote_rows = origin[train_idx][prov[:, :2].astype(np.intp).ravel()]
    audit = FoldAudit(i, origin[train_idx], origin[test_idx], np.unique(norm_rows), np.unique(smote_rows))
    cfg = ModelConfig.from_dict({**config.to_dict(), "seed": _fold_seed(seed, i, 1)})
    try:
        model = train(cfg, Xtr, ytr, names)
    except Exception as exc:
        raise RuntimeError(f"fold {i}: training {config.kind.value} failed: {exc}") from exc
    ms = metrics_for(task, predict(model, Xte), y[test_idx])
    return ms, audit, (model if keep else None), inputs


def cross_validate(dataset: LabeledDataset, task: str, config: ModelConfig, k: int = 10, seed: int = 0,
                   flags: PipelineFlags = PipelineFlags(), feature_set_name: str = "all", jobs: int = 1,
                   keep_models: bool = False, plan: FoldPlan | None = None) -> CVResult:
    """k-fold evaluation of one model on one feature set.

    In default mode every fold fits normalization and SMOTE on its training
    rows alone, and the audit asserts that no test row fed either step. In
    paper mode the whole dataset is normalized and balanced first and the
    folds are drawn over the balanced rows.
    """
    names = feature_set(feature_set_name) if feature_set_name else dataset.feature_names
    ds = dataset.select(names)
    X, y = ds.X, ds.labels(task)
    origin = np.arange(X.shape[0])  # row in the input dataset; -1 for synthetic rows
    if flags.paper_mode or flags.normalize_global:
        X = zscore_apply(zscore_fit(X), X)
    if flags.paper_mode and flags.smote:
        n0 = X.shape[0]
        X, y = smote(X, y, flags.k_neighbors, _fold_seed(seed, 0, 2))
        origin = np.concatenate([origin, np.full(X.shape[0] - n0, -1)])
    if plan is None:
        groups = ds.dyad_id if flags.group_folds else None
        plan = kfold(X.shape[0], k, seed, y if flags.stratify else None, groups)
    elif plan.n_rows != X.shape[0]:
        raise ValueError(f"fold plan covers {plan.n_rows} rows but the data has {X.shape[0]}")
    jobs_list = [
        (i, X, y, *plan.split(i), config, flags, task, seed, names, origin, keep_models) for i in range(plan.k)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outs = list(ex.map(_run_fold, jobs_list))
    else:
        outs = [_run_fold(j) for j in jobs_list]
    result = CVResult(config.kind.value, feature_set_name, task, [o[0] for o in outs])
    result.audits = [o[1] for o in outs]
    result.models = [o[2] for o in outs] if keep_models else []
    result.fold_inputs = [o[3] for o in outs] if keep_models else []
    result.test_rows = [plan.folds[i] for i in range(plan.k)]
    if not flags.paper_mode and not flags.normalize_global:
        for a in result.audits:
            a.assert_clean()
    return result


# ---------------------------------------------------------------------------
# importance


@dataclass
class Ranking:
    method: str
    names: tuple
    scores: np.ndarray  # signed where the method is signed
    notes: list = field(default_factory=list)

    def top(self, k: int = 20) -> list[tuple[str, float]]:
        return list(zip(self.names[:k], self.scores[:k].tolist()))

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.scores.tolist()))


def _rank(method, names, scores, notes=None) -> Ranking:
    order = np.argsort(-np.abs(scores), kind="stable")
    return Ranking(method, tuple(names[i] for i in order), scores[order], notes or [])


def _require(models, allowed, what):
    if not models:
        raise ValueError(f"{what} needs at least one fitted model")
    for m in models:
        if m.kind not in allowed:
            raise TypeError(f"{what} cannot use a {m.kind.value} model")


def coef_vector(model: TrainedModel) -> np.ndarray:
    """High-vs-Low log-odds weight for two classes; mean |weight| over classes otherwise."""
    W = model.params["W"]
    if model.n_classes == 2:
        return W[:, 1] - W[:, 0]
    return np.mean(np.abs(W), axis=1)


def importance_coef(models: Sequence[TrainedModel], feature_names, X=None) -> Ranking:
    """Mean logistic-regression coefficient across folds, ranked by magnitude.

    With ``X``, near-duplicate columns (|r| > 0.999) are listed in ``notes``
    together with the absolute gap between their coefficients, since the
    model can split weight between them arbitrarily.
    """
    _require(models, {ModelKind.LR}, "coefficient importance")
    scores = np.mean([coef_vector(m) for m in models], axis=0)
    notes = []
    if X is not None:
        X = np.asarray(X, dtype=np.float64)
        sd = X.std(axis=0)
        ok = np.flatnonzero(sd > 0)
        if ok.size > 1:
            R = np.corrcoef(X[:, ok], rowvar=False)
            for a, b in zip(*np.nonzero(np.triu(np.abs(R) > 0.999, 1))):
                i, j = ok[a], ok[b]
                notes.append({
                    "collinear": [feature_names[i], feature_names[j]],
                    "abs_coef_difference": float(abs(abs(scores[i]) - abs(scores[j]))),
                })
    return _rank("coef", list(feature_names), scores, notes)


def importance_mdi(models: Sequence[TrainedModel], feature_names) -> Ranking:
    _require(models, {ModelKind.RF, ModelKind.DT}, "MDI importance")
    scores = np.mean([mdi(m) for m in models], axis=0)
    return _rank("mdi", list(feature_names), scores)


def shapley_sampling(f: Callable, x: np.ndarray, background: np.ndarray, n_samples: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Permutation-sampling Shapley estimate of ``f`` at ``x``.

    Each sample draws a feature order and a background row (cycled in order)
    and walks from the background row to ``x`` one feature at a time,
    crediting each feature with the change in ``f``. Attributions over each
    walk sum to ``f(x) - f(z)``, so when ``n_samples`` is a multiple of the
    background size they sum to ``f(x) - mean f(background)`` exactly.
    Returns ``(d, outputs)``.
    """
    d = x.shape[0]
    phi = None
    for s in range(n_samples):
        z = background[s % background.shape[0]]
        order = rng.permutation(d)
        path = np.repeat(z[None], d + 1, axis=0)
        mask = np.arange(d + 1)[:, None] > np.arange(d)[None, :]  # step j has the first j features set
        cols = np.broadcast_to(order, (d + 1, d))
        path[np.arange(d + 1)[:, None], cols] = np.where(mask, x[order][None], z[order][None])
        out = np.asarray(f(path), dtype=np.float64).reshape(d + 1, -1)
        contrib = np.diff(out, axis=0)
        if phi is None:
            phi = np.zeros((d, out.shape[1]))
        phi[order] += contrib
    return phi / n_samples


def importance_shap(models: Sequence[TrainedModel], X_background, X_explain, feature_names, n_samples: int = 256,
                    seed: int = 0, output: str = "probability") -> Ranking:
    """Mean |Shapley value| per feature over explained rows, output classes and folds.

    ``X_background`` and ``X_explain`` are either arrays shared by all models
    or per-model sequences (each fold explaining its own test rows).
    """
    _require(models, set(ModelKind) - {ModelKind.LR, ModelKind.SVM, ModelKind.DT, ModelKind.RF}, "SHAP importance")
    if n_samples < 50:
        raise ValueError("SHAP sampling needs n_samples >= 50")
    if output not in ("probability", "logit"):
        raise ValueError("output must be 'probability' or 'logit'")
    per_model = isinstance(X_background, (list, tuple))
    totals = []
    for mi, model in enumerate(models):
        bg = np.asarray(X_background[mi] if per_model else X_background, dtype=np.float64)
        ex = np.asarray(X_explain[mi] if per_model else X_explain, dtype=np.float64)
        if bg.shape[0] == 0:
            raise ValueError("empty background set")
        f = (lambda Z, m=model: predict_scores(m, Z)) if output == "probability" else (
            lambda Z, m=model: network_logits(m, Z))
        rng = np.random.default_rng([seed, mi])
        acc = np.zeros(ex.shape[1])
        for x in ex:
            acc += np.abs(shapley_sampling(f, x, bg, n_samples, rng)).mean(axis=1)
        totals.append(acc / max(ex.shape[0], 1))
    return _rank("shap", list(feature_names), np.mean(totals, axis=0))


# ---------------------------------------------------------------------------
# comparisons and ablation


@dataclass
class Comparison:
    model: str
    metric: str
    set_a: str
    set_b: str
    mean_a: float
    mean_b: float
    statistic: float
    p_value: float
    degenerate: bool


def compare(a: CVResult, b: CVResult) -> list[Comparison]:
    out = []
    for metric in METRICS:
        r = paired_ttest_detail(a.values(metric), b.values(metric))
        out.append(Comparison(a.model, metric, a.feature_set, b.feature_set, a.mean(metric), b.mean(metric),
                              r.statistic, r.p_value, r.degenerate))
    return out


@dataclass
class AblationRow:
    model: str
    feature_set: str
    n_features: int
    means: dict
    deltas: dict  # percentage points relative to the baseline set


def ablation(dataset: LabeledDataset, task: str, model_kinds, feature_sets=ABLATION_SETS, k: int = 10, seed: int = 0,
             flags: PipelineFlags = PipelineFlags(), baseline: str = "L", jobs: int = 1, configs: dict | None = None):
    """Cross-validate each model on each feature-group union.

    Returns ``(rows, results)``. Deltas are ``100 * (mean - baseline mean)``.
    """
    for fs in feature_sets:
        if not feature_set(fs):
            raise ValueError("empty feature set")
    sets = list(feature_sets)
    if baseline not in sets:
        sets.insert(0, baseline)
    rows, results = [], []
    for kind in model_kinds:
        kind = ModelKind.parse(kind)
        cfg = (configs or {}).get(kind) or ModelConfig.default(kind)
        by_set = {fs: cross_validate(dataset, task, cfg, k, seed, flags, fs, jobs) for fs in sets}
        base = {m: by_set[baseline].mean(m) for m in METRICS}
        for fs in feature_sets:
            r = by_set[fs]
            results.append(r)
            means = {m: r.mean(m) for m in METRICS}
            rows.append(AblationRow(kind.value, fs, len(feature_set(fs)), means,
                                    {m: 100.0 * (means[m] - base[m]) for m in METRICS}))
    return rows, results


# ---------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    config: dict
    results: list = field(default_factory=list)
    comparisons: list = field(default_factory=list)
    importance: list = field(default_factory=list)
    ablation: list = field(default_factory=list)

    def summary(self) -> list[dict]:
        rows = []
        for r in self.results:
            row = {"model": r.model, "feature_set": r.feature_set, "task": r.task, "n_folds": len(r.folds)}
            for m in METRICS:
                row[f"{m}_mean"] = r.mean(m)
                row[f"{m}_std"] = r.std(m)
            rows.append(row)
        return rows

    def fold_rows(self) -> list[dict]:
        rows = []
        for r in self.results:
            for i, ms in enumerate(r.folds):
                rows.append({"model": r.model, "feature_set": r.feature_set, "task": r.task, "fold": i,
                             **ms.as_dict(), "confusion": ms.confusion.tolist(), "flags": list(ms.flags)})
        return rows

    def to_dict(self, top_k: int = 20) -> dict:
        return {
            "config": self.config,
            "folds": self.fold_rows(),
            "summary": self.summary(),
            "comparisons": [asdict(c) for c in self.comparisons],
            "importance": [
                {"method": rk.method, "top": [{"feature": n, "score": s} for n, s in rk.top(top_k)], "notes": rk.notes}
                for rk in self.importance
            ],
            "ablation": [asdict(a) for a in self.ablation],
        }

    def to_json(self, path, top_k: int = 20) -> None:
        Path(path).write_text(json.dumps(self.to_dict(top_k), indent=2, sort_keys=True) + "\n")

    def to_csv(self, directory, stem: str = "report", top_k: int = 20) -> list[Path]:
        """Write one CSV per non-empty table; returns the paths written."""
        directory = Path(directory)
        written = []

        def dump(name, header, rows):
            path = directory / f"{stem}_{name}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
            written.append(path)

        if self.results:
            dump("folds", ["model", "feature_set", "task", "fold", *METRICS],
                 [[r["model"], r["feature_set"], r["task"], r["fold"], *(repr(r[m]) for m in METRICS)]
                  for r in self.fold_rows()])
            cols = [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
            dump("summary", ["model", "feature_set", "task", "n_folds", *cols],
                 [[r["model"], r["feature_set"], r["task"], r["n_folds"], *(repr(r[c]) for c in cols)]
                  for r in self.summary()])
        if self.comparisons:
            dump("pvalues", ["model", "metric", "set_a", "set_b", "mean_a", "mean_b", "t", "p_value", "degenerate"],
                 [[c.model, c.metric, c.set_a, c.set_b, repr(c.mean_a), repr(c.mean_b), repr(c.statistic),
                   repr(c.p_value), int(c.degenerate)] for c in self.comparisons])
        if self.importance:
            dump("importance", ["method", "rank", "feature", "score"],
                 [[rk.method, i + 1, n, repr(s)] for rk in self.importance for i, (n, s) in enumerate(rk.top(top_k))])
        if self.ablation:
            dump("ablation", ["model", "feature_set", "n_features", *(f"{m}_mean" for m in METRICS),
                              *(f"{m}_delta_pp" for m in METRICS)],
                 [[a.model, a.feature_set, a.n_features, *(repr(a.means[m]) for m in METRICS),
                   *(repr(a.deltas[m]) for m in METRICS)] for a in self.ablation])
        return written

"""Evaluation: confusion metrics, stratified cross-validation, and
rank-based model comparison.

Malware is the positive class everywhere. Ratio metrics define 0/0 as 0.
Cross-validation refits the column selector inside every training fold and
checks its row fingerprint, so a selector fitted on test rows raises
LeakageError instead of quietly inflating scores.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2 as _chi2_dist
from scipy.stats import norm as _norm_dist

from .base import check_labels
from .encoding import FeatureMatrix
from .errors import (
    ClassTooSmall,
    DegenerateGroups,
    DimensionMismatch,
    EmptyConfusion,
    InvalidParameter,
    LeakageError,
)

METRIC_NAMES = ("accuracy", "f1", "precision", "tpr", "tnr")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true, dtype=np.int64)
        p = np.asarray(y_pred, dtype=np.int64)
        if t.shape != p.shape:
            raise DimensionMismatch(f"{t.shape} labels vs {p.shape} predictions")
        return cls(
            tp=int(((t == 1) & (p == 1)).sum()),
            fp=int(((t == 0) & (p == 1)).sum()),
            tn=int(((t == 0) & (p == 0)).sum()),
            fn=int(((t == 1) & (p == 0)).sum()),
        )

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    f1: float
    precision: float
    tpr: float
    tnr: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def __getitem__(self, name: str) -> float:
        if name not in METRIC_NAMES:
            raise KeyError(name)
        return getattr(self, name)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics_from_confusion(cm: ConfusionMatrix) -> MetricSet:
    if cm.total == 0:
        raise EmptyConfusion("confusion matrix has no observations")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    tpr = _ratio(cm.tp, cm.tp + cm.fn)
    return MetricSet(
        accuracy=_ratio(cm.tp + cm.tn, cm.total),
        f1=_ratio(2 * precision * tpr, precision + tpr),
        precision=precision,
        tpr=tpr,
        tnr=_ratio(cm.tn, cm.tn + cm.fp),
    )


def stratified_kfold(labels, k: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic stratified folds: each class is shuffled once, then
    dealt round-robin. Test index arrays come back sorted ascending."""
    y = check_labels(labels, len(labels))
    if k < 2:
        raise InvalidParameter(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(y.size, dtype=np.int64)
    for cls in (0, 1):
        members = np.flatnonzero(y == cls)
        if 0 < members.size < k:
            raise ClassTooSmall(f"class {cls} has {members.size} rows, needs >= {k}")
        rng.shuffle(members)
        assignment[members] = np.arange(members.size) % k
    folds = []
    everything = np.arange(y.size)
    for f in range(k):
        test = everything[assignment == f]
        train = everything[assignment != f]
        folds.append((train, test))
    return folds


def folds_fingerprint(folds, row_ids=None) -> str:
    """Hash of the fold layout; pipelines may only be ensembled when this
    matches."""
    digest = hashlib.sha256()
    digest.update(str(len(folds)).encode())
    for _, test in folds:
        if row_ids is not None:
            keys = [row_ids[i] for i in test]
        else:
            keys = [str(int(i)) for i in test]
        digest.update(("\x00".join(keys) + "\x01").encode())
    return digest.hexdigest()


@dataclass(frozen=True)
class FoldResult:
    fold: int
    test_indices: tuple[int, ...]
    test_ids: tuple[str, ...] | None
    y_true: tuple[int, ...]
    y_pred: tuple[int, ...]
    confusion: ConfusionMatrix
    metrics: MetricSet


@dataclass(frozen=True)
class CVResult:
    folds: tuple[FoldResult, ...]
    mean: dict[str, float]
    std: dict[str, float]
    fold_fingerprint: str

    def summary(self, metric: str = "accuracy") -> str:
        return format_mean_std(self.mean[metric], self.std[metric])

    def metric_values(self, metric: str = "accuracy") -> np.ndarray:
        return np.array([f.metrics[metric] for f in self.folds])


def _slice(matrix, idx):
    if isinstance(matrix, FeatureMatrix):
        return matrix.select_rows([int(i) for i in idx])
    return matrix[idx]


def _rows_fp(matrix) -> str:
    if isinstance(matrix, FeatureMatrix):
        return matrix.rows_fingerprint()
    arr = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64))
    return hashlib.sha256(arr.tobytes()).hexdigest()


def cross_validate(
    model,
    matrix,
    labels,
    k: int = 10,
    seed: int = 0,
    selector=None,
    grid=None,
) -> CVResult:
    """Stratified k-fold evaluation of one pipeline.

    Per fold: the selector (if any) is refit on the training slice only,
    the grid (if any) is searched with an inner CV on the training slice,
    and a fresh clone of the model is fitted. Scores never touch test rows
    before prediction time.
    """
    if isinstance(matrix, FeatureMatrix):
        n = len(matrix.row_ids)
        row_ids = list(matrix.row_ids)
    else:
        n = np.asarray(matrix).shape[0]
        row_ids = None
    y = check_labels(labels, n, require_two_classes=True)
    folds = stratified_kfold(y, k, seed)
    fingerprint = folds_fingerprint(folds, row_ids)
    results = []
    for f, (train_idx, test_idx) in enumerate(folds):
        if np.intersect1d(train_idx, test_idx).size:
            raise LeakageError(f"fold {f} shares rows between train and test")
        train_m, test_m = _slice(matrix, train_idx), _slice(matrix, test_idx)
        y_train, y_test = y[train_idx], y[test_idx]
        if selector is not None:
            sel = selector.clone()
            sel.fit(train_m, y_train)
            if getattr(sel, "rows_fingerprint_", None) != _rows_fp(train_m):
                raise LeakageError(
                    f"fold {f}: selector was fitted on rows outside the training slice"
                )
            train_m, test_m = sel.transform(train_m), sel.transform(test_m)
        fold_model = model.clone()
        if grid is not None:
            from .models import grid_search, model_kind

            best = grid_search(model_kind(model), grid, train_m, y_train, k=3, seed=seed)
            fold_model.set_params(**best.params)
        fold_model.fit(train_m, y_train)
        y_pred = fold_model.predict(test_m)
        cm = ConfusionMatrix.from_predictions(y_test, y_pred)
        results.append(
            FoldResult(
                fold=f,
                test_indices=tuple(int(i) for i in test_idx),
                test_ids=tuple(row_ids[i] for i in test_idx) if row_ids else None,
                y_true=tuple(int(v) for v in y_test),
                y_pred=tuple(int(v) for v in y_pred),
                confusion=cm,
                metrics=metrics_from_confusion(cm),
            )
        )
    mean, std = {}, {}
    for name in METRIC_NAMES:
        vals = np.array([r.metrics[name] for r in results])
        mean[name] = float(vals.mean())
        std[name] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    return CVResult(tuple(results), mean, std, fingerprint)


def _average_ranks(values: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Midranks for the pooled sample plus the size of every tie group."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    ties = []
    i = 0
    sv = values[order]
    while i < values.size:
        j = i
        while j + 1 < values.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        ties.append(j - i + 1)
        i = j + 1
    return ranks, ties


def _check_groups(groups) -> list[np.ndarray]:
    gs = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(gs) < 2:
        raise DegenerateGroups(f"need >= 2 groups, got {len(gs)}")
    for i, g in enumerate(gs):
        if g.size == 0:
            raise DegenerateGroups(f"group {i} is empty")
        if not np.all(np.isfinite(g)):
            raise DegenerateGroups(f"group {i} has non-finite values")
    return gs


def kruskal_wallis(groups) -> tuple[float, float]:
    """Tie-corrected Kruskal-Wallis H and its chi-square p-value.

    All observations identical is defined as (H, p) = (0, 1).
    """
    gs = _check_groups(groups)
    pooled = np.concatenate(gs)
    n = pooled.size
    ranks, ties = _average_ranks(pooled)
    correction = 1.0 - sum(t**3 - t for t in ties) / (n**3 - n) if n > 1 else 0.0
    if correction <= 0:
        return 0.0, 1.0
    h = 0.0
    start = 0
    for g in gs:
        r = ranks[start : start + g.size]
        h += g.size * (r.mean() ** 2)
        start += g.size
    h = (12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)) / correction
    h = max(0.0, h)
    p = float(_chi2_dist.sf(h, len(gs) - 1))
    return float(h), p


@dataclass(frozen=True)
class PairwiseResult:
    a: int
    b: int
    z: float
    p_raw: float
    p_adj: float
    significant: bool


def dunns_test(groups, alpha: float = 0.05) -> list[PairwiseResult]:
    """Dunn's pairwise z tests on pooled midranks, Bonferroni-adjusted
    over all pairs. Adjusted p never drops below the raw p."""
    gs = _check_groups(groups)
    pooled = np.concatenate(gs)
    n = pooled.size
    ranks, ties = _average_ranks(pooled)
    mean_ranks = []
    start = 0
    for g in gs:
        mean_ranks.append(ranks[start : start + g.size].mean())
        start += g.size
    tie_term = sum(t**3 - t for t in ties) / (12.0 * (n - 1)) if n > 1 else 0.0
    base_var = n * (n + 1) / 12.0 - tie_term
    pairs = [(i, j) for i in range(len(gs)) for j in range(i + 1, len(gs))]
    out = []
    for i, j in pairs:
        var = base_var * (1.0 / gs[i].size + 1.0 / gs[j].size)
        if var <= 0:
            z = 0.0
        else:
            z = (mean_ranks[i] - mean_ranks[j]) / np.sqrt(var)
        p_raw = float(2.0 * _norm_dist.sf(abs(z)))
        p_adj = min(1.0, p_raw * len(pairs))
        out.append(PairwiseResult(i, j, float(z), p_raw, p_adj, p_adj < alpha))
    return out


@dataclass(frozen=True)
class ComparisonResult:
    names: tuple[str, ...]
    h: float
    p: float
    alpha: float
    pairwise: tuple[PairwiseResult, ...] | None

    def as_dict(self) -> dict:
        doc = {
            "names": list(self.names),
            "H": self.h,
            "p": self.p,
            "alpha": self.alpha,
            "pairwise": None,
        }
        if self.pairwise is not None:
            doc["pairwise"] = [
                {
                    "a": self.names[pw.a],
                    "b": self.names[pw.b],
                    "z": pw.z,
                    "p_raw": pw.p_raw,
                    "p_adj": pw.p_adj,
                    "significant": pw.significant,
                }
                for pw in self.pairwise
            ]
        return doc


def compare_models(named_groups: dict[str, np.ndarray], alpha: float = 0.05) -> ComparisonResult:
    """Omnibus Kruskal-Wallis across the named per-fold metric samples;
    Dunn pairwise tests run only when the omnibus p is below alpha."""
    names = tuple(named_groups)
    groups = [named_groups[name] for name in names]
    h, p = kruskal_wallis(groups)
    pairwise = tuple(dunns_test(groups, alpha)) if p < alpha else None
    return ComparisonResult(names, h, p, alpha, pairwise)


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


def render_table(headers: list[str], rows: list[list[str]]) -> str:
    """Monospace table with two-space gutters."""
    widths = [len(h) for h in headers]
    for row in rows:
        if len(row) != len(headers):
            raise DimensionMismatch(f"row has {len(row)} cells, expected {len(headers)}")
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
        "  ".join("-" * w for w in widths).rstrip(),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


REPORT_FORMAT = "droidml-eval-report"


def pipeline_doc(name: str, model_kind: str, params: dict, result: CVResult) -> dict:
    return {
        "name": name,
        "model_kind": model_kind,
        "params": params,
        "mean": dict(result.mean),
        "std": dict(result.std),
        "fold_fingerprint": result.fold_fingerprint,
        "folds": [
            {
                "fold": fr.fold,
                "test_indices": list(fr.test_indices),
                "test_ids": list(fr.test_ids) if fr.test_ids is not None else None,
                "y_true": list(fr.y_true),
                "y_pred": list(fr.y_pred),
                "confusion": fr.confusion.as_dict(),
                "metrics": fr.metrics.as_dict(),
            }
            for fr in result.folds
        ],
    }


def report_doc(
    pipelines: list[dict],
    k: int,
    seed: int,
    comparison: ComparisonResult | None = None,
) -> dict:
    return {
        "format": REPORT_FORMAT,
        "k": k,
        "seed": seed,
        "pipelines": pipelines,
        "comparison": comparison.as_dict() if comparison is not None else None,
    }


def write_report(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True, indent=1)
        handle.write("\n")


def read_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    if doc.get("format") != REPORT_FORMAT:
        raise InvalidParameter("not an evaluation report file")
    return doc


def report_table(doc: dict) -> str:
    headers = ["pipeline"] + [name for name in METRIC_NAMES]
    rows = []
    for pipe in doc["pipelines"]:
        rows.append(
            [pipe["name"]]
            + [format_mean_std(pipe["mean"][m], pipe["std"][m]) for m in METRIC_NAMES]
        )
    return render_table(headers, rows)

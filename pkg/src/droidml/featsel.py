"""Feature-column scoring and selection.

Scorers: mutual information (nats), chi-square, Pearson correlation,
Welch t statistic, and the malware-occurrence ratio (wfs). Selectors:
variance threshold, per-class top-k union (sails), and top-k over any
scorer. Count/Numeric columns are discretized into 10 equal-frequency bins
for the contingency-based scorers; binary columns are used as-is.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .base import Estimator, check_array, check_labels
from .encoding import FeatureMatrix, MatrixKind
from .errors import (
    ClassTooSmall,
    DimensionMismatch,
    InvalidParameter,
    KOutOfRange,
)

HIGHER_BETTER = "HigherBetter"
ABSOLUTE_HIGHER_BETTER = "AbsoluteHigherBetter"

_SE_FLOOR = 1e-12  # keeps t finite; constant columns still score exactly 0
N_BINS = 10


@dataclass(frozen=True)
class SelectionScores:
    selector: str
    scores: np.ndarray
    ordering: str

    def __post_init__(self) -> None:
        if self.scores.size and not np.all(np.isfinite(self.scores)):
            raise DimensionMismatch("selection scores must be finite")

    def ranking_key(self) -> np.ndarray:
        if self.ordering == ABSOLUTE_HIGHER_BETTER:
            return np.abs(self.scores)
        return self.scores


def _as_array(matrix: FeatureMatrix | np.ndarray) -> tuple[np.ndarray, MatrixKind | None]:
    if isinstance(matrix, FeatureMatrix):
        return matrix.toarray(), matrix.vocab.kind
    return check_array(matrix), None


def _validated(matrix, labels) -> tuple[np.ndarray, np.ndarray, MatrixKind | None]:
    X, kind = _as_array(matrix)
    y = check_labels(labels, X.shape[0], require_two_classes=True)
    return X, y, kind


def _is_binary(col: np.ndarray) -> bool:
    return bool(np.isin(col, (0.0, 1.0)).all())


def _discretize(col: np.ndarray) -> np.ndarray:
    """Binary columns pass through; others get 10 equal-frequency bins."""
    if _is_binary(col):
        return col.astype(np.int64)
    edges = np.quantile(col, np.linspace(0, 1, N_BINS + 1)[1:-1])
    return np.searchsorted(edges, col, side="left").astype(np.int64)


def _contingency(bins: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Observed counts, shape (distinct bins, 2 classes)."""
    _, inverse = np.unique(bins, return_inverse=True)
    table = np.zeros((inverse.max() + 1, 2), dtype=np.float64)
    np.add.at(table, (inverse, y), 1.0)
    return table


def _mi_terms(table: np.ndarray) -> np.ndarray:
    """Per-cell MI contributions (nats); zero-probability cells contribute 0."""
    n = table.sum()
    pxy = table / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    terms = np.zeros_like(pxy)
    mask = pxy > 0
    terms[mask] = pxy[mask] * np.log(pxy[mask] / (px @ py)[mask])
    return terms


def _chi2_terms(table: np.ndarray) -> np.ndarray:
    """Per-cell (O-E)^2/E contributions; zero-expected cells contribute 0."""
    n = table.sum()
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / n
    terms = np.zeros_like(table)
    mask = expected > 0
    terms[mask] = (table[mask] - expected[mask]) ** 2 / expected[mask]
    return terms


def mutual_information(matrix, labels) -> SelectionScores:
    """Per-column MI (nats) between the discretized column and the labels."""
    X, y, _ = _validated(matrix, labels)
    scores = np.array(
        [max(0.0, _mi_terms(_contingency(_discretize(X[:, j]), y)).sum()) for j in range(X.shape[1])]
    )
    return SelectionScores("MutualInformation", scores, HIGHER_BETTER)


def chi_square(matrix, labels) -> SelectionScores:
    """Per-column chi-square statistic from the bin-by-class contingency."""
    X, y, _ = _validated(matrix, labels)
    scores = np.array(
        [_chi2_terms(_contingency(_discretize(X[:, j]), y)).sum() for j in range(X.shape[1])]
    )
    return SelectionScores("ChiSquare", scores, HIGHER_BETTER)


def pearson(matrix, labels) -> SelectionScores:
    """Pearson correlation of column vs label; constant columns score 0."""
    X, y, _ = _validated(matrix, labels)
    yc = y - y.mean()
    sy = np.sqrt((yc**2).mean())
    scores = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        xc = X[:, j] - X[:, j].mean()
        sx = np.sqrt((xc**2).mean())
        if sx > 0:
            scores[j] = (xc * yc).mean() / (sx * sy)
    return SelectionScores("PCC", scores, ABSOLUTE_HIGHER_BETTER)


def column_variances(matrix) -> np.ndarray:
    X, _ = _as_array(matrix)
    return X.var(axis=0)


def variance_threshold(matrix, threshold: float) -> np.ndarray:
    """Ascending indices of columns whose population variance exceeds threshold."""
    if threshold < 0:
        raise InvalidParameter(f"threshold must be >= 0, got {threshold}")
    return np.flatnonzero(column_variances(matrix) > threshold)


def t_test(matrix, labels) -> SelectionScores:
    """Welch two-sample |t| per column between class-conditional samples."""
    X, y, _ = _validated(matrix, labels)
    mal, ben = X[y == 1], X[y == 0]
    if len(mal) < 2 or len(ben) < 2:
        raise ClassTooSmall("t-test needs at least 2 rows per class")
    se = np.sqrt(mal.var(axis=0, ddof=1) / len(mal) + ben.var(axis=0, ddof=1) / len(ben))
    t = (mal.mean(axis=0) - ben.mean(axis=0)) / np.maximum(se, _SE_FLOOR)
    return SelectionScores("TTest", np.abs(t), HIGHER_BETTER)


def wfs(matrix, labels, occurrence: str = "counts") -> SelectionScores:
    """Malware share of total occurrences: occ_mal / (occ_mal + occ_ben).

    ``occurrence="counts"`` sums cell values (count matrices); ``"apps"``
    counts rows with a nonzero cell. Columns with zero total score 0.
    """
    if occurrence not in ("counts", "apps"):
        raise InvalidParameter(f"unknown occurrence mode {occurrence!r}")
    X, y, kind = _validated(matrix, labels)
    if kind is MatrixKind.NUMERIC:
        raise InvalidParameter("wfs needs a Binary or Count matrix")
    vals = (X > 0).astype(np.float64) if occurrence == "apps" else X
    occ_mal = vals[y == 1].sum(axis=0)
    occ_ben = vals[y == 0].sum(axis=0)
    total = occ_mal + occ_ben
    scores = np.divide(occ_mal, total, out=np.zeros_like(total), where=total > 0)
    return SelectionScores("WFS", scores, HIGHER_BETTER)


def sails_class_scores(matrix, labels, base: str = "mi") -> tuple[np.ndarray, np.ndarray]:
    """Per-class additive shares of the base statistic, per column.

    For each column's bin-by-class contingency table, the benign (malware)
    score is the benign (malware) column's share of the base statistic: the
    summed chi-square cell terms of that class, or the summed MI cell terms.
    This is one concrete reading of per-class occurrence scoring; substitute
    your own split by calling the base scorers directly if you use another.
    """
    if base not in ("mi", "chi2"):
        raise InvalidParameter(f"unknown sails base {base!r}")
    X, y, _ = _validated(matrix, labels)
    benign = np.zeros(X.shape[1])
    malware = np.zeros(X.shape[1])
    term_fn = _mi_terms if base == "mi" else _chi2_terms
    for j in range(X.shape[1]):
        terms = term_fn(_contingency(_discretize(X[:, j]), y))
        benign[j] = terms[:, 0].sum()
        malware[j] = terms[:, 1].sum()
    return benign, malware


def _top_k_of(scores: np.ndarray, k: int) -> np.ndarray:
    order = np.lexsort((np.arange(scores.size), -scores))
    return order[:k]


def sails(matrix, labels, base: str = "mi", k: int = 10) -> np.ndarray:
    """Union of the top-k benign-ranked and top-k malware-ranked columns.

    Each per-class list is sorted descending (ties to the lower column
    index); the union has between k and 2k members. k is clamped to the
    column count.
    """
    if k < 1:
        raise KOutOfRange(f"k must be >= 1, got {k}")
    benign, malware = sails_class_scores(matrix, labels, base)
    k = min(k, benign.size)
    chosen = set(_top_k_of(benign, k).tolist()) | set(_top_k_of(malware, k).tolist())
    return np.array(sorted(chosen), dtype=np.int64)


def select_top_k(scores: SelectionScores, k: int) -> np.ndarray:
    """Ascending indices of the k best columns; score ties favor lower index."""
    p = scores.scores.size
    if not 1 <= k <= p:
        raise KOutOfRange(f"k must be in [1, {p}], got {k}")
    return np.sort(_top_k_of(scores.ranking_key(), k))


_SCORERS = {
    "mi": mutual_information,
    "chi2": chi_square,
    "pcc": pearson,
    "ttest": t_test,
    "wfs": wfs,
}


def _rows_fingerprint(matrix) -> str:
    if isinstance(matrix, FeatureMatrix):
        return matrix.rows_fingerprint()
    arr = check_array(matrix)
    return hashlib.sha256(arr.tobytes()).hexdigest()


def _reduce(matrix, cols: np.ndarray):
    if isinstance(matrix, FeatureMatrix):
        return matrix.select_columns([int(c) for c in cols])
    return check_array(matrix)[:, cols]


class _BaseSelector(Estimator):
    """Shared transform/support plumbing; fit() is subclass-specific."""

    cols_: np.ndarray | None = None

    def get_support(self) -> np.ndarray:
        self._check_fitted("cols_")
        mask = np.zeros(self.n_cols_, dtype=bool)
        mask[self.cols_] = True
        return mask

    def transform(self, matrix):
        self._check_fitted("cols_")
        return _reduce(matrix, self.cols_)

    def fit_transform(self, matrix, labels=None):
        return self.fit(matrix, labels).transform(matrix)


class ScoreSelector(_BaseSelector):
    """Top-k selection under any scorer: mi, chi2, pcc, ttest, or wfs."""

    def __init__(self, method: str = "mi", k: int = 10, occurrence: str = "counts") -> None:
        if method not in _SCORERS:
            raise ValueError(f"unknown method {method!r}")
        self.method = method
        self.k = k
        self.occurrence = occurrence
        self.cols_: np.ndarray | None = None

    def fit(self, matrix, labels) -> "ScoreSelector":
        if self.method == "wfs":
            self.scores_ = wfs(matrix, labels, self.occurrence)
        else:
            self.scores_ = _SCORERS[self.method](matrix, labels)
        self.n_cols_ = self.scores_.scores.size
        self.cols_ = select_top_k(self.scores_, self.k)
        self.rows_fingerprint_ = _rows_fingerprint(matrix)
        return self


class VarianceSelector(_BaseSelector):
    """Keeps columns with population variance above the threshold."""

    def __init__(self, threshold: float = 0.0) -> None:
        self.threshold = threshold
        self.cols_: np.ndarray | None = None

    def fit(self, matrix, labels=None) -> "VarianceSelector":
        X, _ = _as_array(matrix)
        self.n_cols_ = X.shape[1]
        self.cols_ = variance_threshold(X, self.threshold)
        self.rows_fingerprint_ = _rows_fingerprint(matrix)
        return self


class SailsSelector(_BaseSelector):
    """Per-class top-k union selection over an MI or chi-square base."""

    def __init__(self, base: str = "mi", k: int = 10) -> None:
        self.base = base
        self.k = k
        self.cols_: np.ndarray | None = None

    def fit(self, matrix, labels) -> "SailsSelector":
        X, _ = _as_array(matrix)
        self.n_cols_ = X.shape[1]
        self.cols_ = sails(matrix, labels, self.base, self.k)
        self.rows_fingerprint_ = _rows_fingerprint(matrix)
        return self


def write_scores(scores: SelectionScores, names: list[str], params: dict | None = None) -> str:
    """Scores-file text: header comment, then name<TAB>score by rank order."""
    import json

    if len(names) != scores.scores.size:
        raise DimensionMismatch(f"{len(names)} names for {scores.scores.size} scores")
    key = scores.ranking_key()
    order = np.lexsort((np.arange(key.size), -key))
    header = (
        f"# selector={scores.selector} params={json.dumps(params or {}, sort_keys=True)}"
        f" ordering={scores.ordering}"
    )
    lines = [header]
    for j in order:
        lines.append(f"{names[j]}\t{float(scores.scores[j])!r}")
    return "\n".join(lines) + "\n"

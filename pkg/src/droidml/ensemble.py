"""Majority-vote ensembles over evaluated base pipelines.

Bases come from an evaluation report: per fold, each pipeline's stored
test predictions are re-voted, so ensembling needs no refitting. Only
odd-sized subsets are enumerated, which keeps every vote strict.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EvenMembership,
    FingerprintMismatch,
    InvalidParameter,
    LengthMismatch,
    TooManyBases,
)
from .evaluation import (
    METRIC_NAMES,
    ConfusionMatrix,
    metrics_from_confusion,
    render_table,
)

DEFAULT_CAP = 4096


def vote(predictions) -> np.ndarray:
    """Strict-majority label per position across an odd number of members."""
    arrays = [np.asarray(p, dtype=np.int64) for p in predictions]
    if not arrays or len(arrays) % 2 == 0:
        raise EvenMembership(f"need an odd member count, got {len(arrays)}")
    length = arrays[0].size
    for i, a in enumerate(arrays):
        if a.size != length:
            raise LengthMismatch(f"member {i} has {a.size} predictions, expected {length}")
    stacked = np.stack(arrays)
    return (stacked.sum(axis=0) * 2 > len(arrays)).astype(np.int64)


@dataclass(frozen=True)
class FoldPredictions:
    fold: int
    y_true: tuple[int, ...]
    y_pred: tuple[int, ...]


@dataclass(frozen=True)
class BasePipeline:
    name: str
    fold_fingerprint: str
    folds: tuple[FoldPredictions, ...]


def bases_from_report(doc: dict) -> list[BasePipeline]:
    bases = []
    for pipe in doc["pipelines"]:
        folds = tuple(
            FoldPredictions(
                fold=int(fr["fold"]),
                y_true=tuple(int(v) for v in fr["y_true"]),
                y_pred=tuple(int(v) for v in fr["y_pred"]),
            )
            for fr in pipe["folds"]
        )
        bases.append(BasePipeline(pipe["name"], pipe["fold_fingerprint"], folds))
    return bases


@dataclass(frozen=True)
class EnsembleResult:
    members: tuple[str, ...]
    mean: dict[str, float]


def _check_aligned(bases: list[BasePipeline]) -> None:
    first = bases[0]
    for base in bases[1:]:
        if base.fold_fingerprint != first.fold_fingerprint:
            raise FingerprintMismatch(
                f"{base.name} was evaluated on different folds than {first.name}"
            )
        if len(base.folds) != len(first.folds):
            raise FingerprintMismatch(f"{base.name} has a different fold count")
        for fa, fb in zip(first.folds, base.folds):
            if fa.y_true != fb.y_true:
                raise FingerprintMismatch(
                    f"{base.name} fold {fb.fold} has different test labels"
                )


def _sizes(n: int, max_size: int | None) -> list[int]:
    if max_size is None:
        max_size = n
    if max_size < 3:
        raise InvalidParameter(f"max_size must be >= 3, got {max_size}")
    return list(range(3, min(max_size, n) + 1, 2))


def enumerate_ensembles(
    bases: list[BasePipeline],
    max_size: int | None = None,
    cap: int = DEFAULT_CAP,
) -> list[EnsembleResult]:
    """Every odd subset of size 3..max_size, scored by re-voting the stored
    fold predictions; sorted by mean accuracy descending, then members.

    The combination count is checked against the cap before any voting
    happens.
    """
    if len(bases) < 3:
        raise InvalidParameter(f"need >= 3 base pipelines, got {len(bases)}")
    names = [b.name for b in bases]
    if len(set(names)) != len(names):
        raise InvalidParameter("base pipeline names must be unique")
    _check_aligned(bases)
    sizes = _sizes(len(bases), max_size)
    total = sum(math.comb(len(bases), s) for s in sizes)
    if total > cap:
        raise TooManyBases(f"{total} candidate ensembles exceed the cap of {cap}")
    ordered = sorted(bases, key=lambda b: b.name)
    results = []
    for size in sizes:
        for combo in itertools.combinations(ordered, size):
            per_fold = []
            for f in range(len(combo[0].folds)):
                voted = vote([c.folds[f].y_pred for c in combo])
                cm = ConfusionMatrix.from_predictions(combo[0].folds[f].y_true, voted)
                per_fold.append(metrics_from_confusion(cm))
            mean = {
                name: float(np.mean([m[name] for m in per_fold])) for name in METRIC_NAMES
            }
            results.append(EnsembleResult(tuple(c.name for c in combo), mean))
    results.sort(key=lambda r: (-r.mean["accuracy"], r.members))
    return results


ENSEMBLE_REPORT_FORMAT = "droidml-ensemble-report"


def ensemble_report_doc(results: list[EnsembleResult], fold_fingerprint: str) -> dict:
    return {
        "format": ENSEMBLE_REPORT_FORMAT,
        "fold_fingerprint": fold_fingerprint,
        "ensembles": [
            {"members": list(r.members), "mean": dict(r.mean)} for r in results
        ],
    }


def ensemble_table(doc: dict) -> str:
    headers = ["members"] + list(METRIC_NAMES)
    rows = []
    for row in doc["ensembles"]:
        rows.append(
            ["+".join(row["members"])] + [f"{row['mean'][m]:.3f}" for m in METRIC_NAMES]
        )
    return render_table(headers, rows)

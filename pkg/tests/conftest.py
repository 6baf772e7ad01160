from __future__ import annotations

import numpy as np
import pytest

from droidml.encoding import FeatureMatrix, MatrixKind, Vocabulary


def matrix_from_array(
    X, kind: MatrixKind = MatrixKind.COUNT, row_ids: list[str] | None = None
) -> FeatureMatrix:
    """Dense array to FeatureMatrix with f000-style column names."""
    arr = np.asarray(X, dtype=np.float64)
    if row_ids is None:
        row_ids = [format(i, "064x") for i in range(arr.shape[0])]
    vocab = Vocabulary(tuple(f"f{j:03d}" for j in range(arr.shape[1])), kind)
    cells = {
        (i, j): float(arr[i, j])
        for i in range(arr.shape[0])
        for j in range(arr.shape[1])
        if arr[i, j] != 0
    }
    return FeatureMatrix(vocab=vocab, row_ids=list(row_ids), cells=cells)


def fake_app_id(i: int) -> str:
    return format(i, "064x")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)

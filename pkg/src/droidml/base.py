"""Estimator base class and input validation helpers.

Encoders, selectors, and classifiers follow the familiar fit/transform/predict
shape: ``__init__`` stores hyperparameters only, ``fit`` learns state into
trailing-underscore attributes and returns ``self``, and ``get_params`` /
``set_params`` / ``clone`` make estimators configurable and copyable without
dragging fitted state along.
"""

from __future__ import annotations

import inspect
from typing import Any

import numpy as np

from .errors import DegenerateLabels, DimensionMismatch, NotFittedError


class Estimator:
    """Base for all fit-style objects in this package."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self) -> dict[str, Any]:
        """Hyperparameters as passed to (or defaulted by) ``__init__``."""
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params: Any) -> "Estimator":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(f"unknown parameter {name!r} for {type(self).__name__}")
            setattr(self, name, value)
        return self

    def clone(self) -> "Estimator":
        """A new unfitted estimator with the same hyperparameters."""
        return type(self)(**self.get_params())

    def _check_fitted(self, attr: str) -> None:
        if getattr(self, attr, None) is None:
            raise NotFittedError(f"{type(self).__name__} has not been fitted")

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_array(X: Any) -> np.ndarray:
    """Coerce to a 2-D float64 array with finite values."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D array, got ndim={arr.ndim}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise DimensionMismatch("array contains non-finite values")
    return arr


def check_labels(y: Any, n_rows: int, *, require_two_classes: bool = False) -> np.ndarray:
    """Coerce labels to an int64 0/1 vector aligned with ``n_rows``."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise DimensionMismatch(f"labels must be 1-D, got ndim={arr.ndim}")
    if arr.shape[0] != n_rows:
        raise DimensionMismatch(f"{arr.shape[0]} labels for {n_rows} rows")
    out = arr.astype(np.int64)
    if not np.isin(out, (0, 1)).all():
        raise DegenerateLabels("labels must be 0 (benign) or 1 (malware)")
    if require_two_classes and np.unique(out).size < 2:
        raise DegenerateLabels("need both classes present")
    return out

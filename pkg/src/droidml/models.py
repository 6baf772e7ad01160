"""Classifiers over feature matrices.

All six model kinds are implemented directly on numpy: decision tree,
random forest, k-nearest-neighbors, naive Bayes, logistic regression, and
a linear SVM. They share one surface: fit(matrix, labels),
predict(matrix), predict_scores(matrix), plus JSON model files via
save_model/load_model. Training rows are sorted by app id internally so a
permuted manifest trains the identical model. Score ties at the decision
threshold always resolve to Benign (0).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .base import Estimator, check_array, check_labels
from .encoding import FeatureMatrix, MatrixKind
from .errors import (
    DimensionMismatch,
    InvalidParameter,
    VocabMismatch,
)

_VAR_FLOOR = 1e-9
_STD_FLOOR = 1e-12


def _prepare_fit(matrix, labels):
    """Returns (X, y, vocab_fingerprint, kind) with rows sorted by app id."""
    if isinstance(matrix, FeatureMatrix):
        X = matrix.toarray()
        y = check_labels(labels, X.shape[0], require_two_classes=True)
        order = np.argsort(np.asarray(matrix.row_ids, dtype=object), kind="stable")
        return X[order], y[order], matrix.vocab.fingerprint(), matrix.vocab.kind
    X = check_array(matrix)
    y = check_labels(labels, X.shape[0], require_two_classes=True)
    return X, y, None, None


class Classifier(Estimator):
    """Shared fit/predict plumbing; subclasses implement _fit and _scores."""

    _fit_attr = "n_features_"
    decision_threshold = 0.5

    def fit(self, matrix, labels) -> "Classifier":
        X, y, fingerprint, kind = _prepare_fit(matrix, labels)
        self.n_features_ = X.shape[1]
        self.vocab_fingerprint_ = fingerprint
        self._fit(X, y, kind)
        return self

    def _check_input(self, matrix) -> np.ndarray:
        self._check_fitted(self._fit_attr)
        if isinstance(matrix, FeatureMatrix):
            if (
                self.vocab_fingerprint_ is not None
                and matrix.vocab.fingerprint() != self.vocab_fingerprint_
            ):
                raise VocabMismatch(
                    "matrix vocabulary differs from the one the model was fitted on"
                )
            X = matrix.toarray()
        else:
            X = check_array(matrix)
        if X.shape[1] != self.n_features_:
            raise DimensionMismatch(
                f"model expects {self.n_features_} columns, got {X.shape[1]}"
            )
        return X

    def predict_scores(self, matrix) -> np.ndarray:
        return self._scores(self._check_input(matrix))

    def predict(self, matrix) -> np.ndarray:
        return (self.predict_scores(matrix) > self.decision_threshold).astype(np.int64)

    def _fit(self, X: np.ndarray, y: np.ndarray, kind) -> None:
        raise NotImplementedError

    def _scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _impurity(n_mal: float, n: float, criterion: str) -> float:
    if n == 0:
        return 0.0
    p = n_mal / n
    if criterion == "gini":
        return 1.0 - p * p - (1.0 - p) * (1.0 - p)
    h = 0.0
    if 0 < p:
        h -= p * math.log(p)
    if p < 1:
        h -= (1.0 - p) * math.log(1.0 - p)
    return h


def _best_split(X, y, idx, features, criterion, min_leaf):
    """Max-gain (feature, threshold); ties keep the earliest candidate."""
    n = idx.size
    n_mal = int(y[idx].sum())
    parent = _impurity(n_mal, n, criterion)
    best = None
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        prefix_mal = np.cumsum(y[idx][order])
        cut = np.flatnonzero(xs_sorted[:-1] < xs_sorted[1:])
        for i in cut:
            nl = i + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            ml = prefix_mal[i]
            child = (
                nl * _impurity(ml, nl, criterion) + nr * _impurity(n_mal - ml, nr, criterion)
            ) / n
            gain = parent - child
            if best is None or gain > best[0]:
                # midpoint threshold: splits generalize into the class margin
                best = (gain, int(f), float((xs_sorted[i] + xs_sorted[i + 1]) / 2.0))
    return best


def _grow_tree(X, y, idx, depth, criterion, max_depth, min_leaf, n_candidates, rng):
    n = idx.size
    n_mal = int(y[idx].sum())
    p_mal = n_mal / n
    pure = n_mal == 0 or n_mal == n
    if pure or (max_depth is not None and depth >= max_depth) or n < 2 * min_leaf:
        return {"leaf": True, "p": p_mal, "n": n}
    p_total = X.shape[1]
    if n_candidates >= p_total:
        features = np.arange(p_total)
    else:
        features = np.sort(rng.choice(p_total, size=n_candidates, replace=False))
    # zero-gain splits are taken too: an impure node only becomes a leaf
    # when no feature separates its rows at all
    best = _best_split(X, y, idx, features, criterion, min_leaf)
    if best is None:
        return {"leaf": True, "p": p_mal, "n": n}
    _, feature, threshold = best
    mask = X[idx, feature] <= threshold
    left = _grow_tree(X, y, idx[mask], depth + 1, criterion, max_depth, min_leaf, n_candidates, rng)
    right = _grow_tree(
        X, y, idx[~mask], depth + 1, criterion, max_depth, min_leaf, n_candidates, rng
    )
    return {"leaf": False, "feature": feature, "threshold": threshold, "left": left, "right": right}


def _tree_scores(node, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        cur, idx = stack.pop()
        if idx.size == 0:
            continue
        if cur["leaf"]:
            out[idx] = cur["p"]
            continue
        mask = X[idx, cur["feature"]] <= cur["threshold"]
        stack.append((cur["left"], idx[mask]))
        stack.append((cur["right"], idx[~mask]))
    return out


class DecisionTree(Classifier):
    """CART-style binary tree; scores are leaf malware fractions."""

    _fit_attr = "tree_"

    def __init__(
        self,
        criterion: str = "gini",
        max_depth: int | None = None,
        min_leaf: int = 1,
        seed: int = 0,
    ) -> None:
        if criterion not in ("gini", "entropy"):
            raise InvalidParameter(f"unknown criterion {criterion!r}")
        if min_leaf < 1:
            raise InvalidParameter(f"min_leaf must be >= 1, got {min_leaf}")
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed

    def _fit(self, X, y, kind) -> None:
        rng = np.random.default_rng(self.seed)
        idx = np.arange(X.shape[0])
        self.tree_ = _grow_tree(
            X, y, idx, 0, self.criterion, self.max_depth, self.min_leaf, X.shape[1], rng
        )

    def _scores(self, X):
        return _tree_scores(self.tree_, X)


class RandomForest(Classifier):
    """Bagged trees with per-split feature subsampling; scores are vote
    fractions, so a tied vote stays Benign."""

    _fit_attr = "trees_"

    def __init__(
        self,
        n_trees: int = 100,
        criterion: str = "gini",
        max_depth: int | None = None,
        min_leaf: int = 1,
        feature_fraction: float | None = None,
        bootstrap: bool = True,
        seed: int = 0,
    ) -> None:
        if n_trees < 1:
            raise InvalidParameter(f"n_trees must be >= 1, got {n_trees}")
        if feature_fraction is not None and not 0 < feature_fraction <= 1:
            raise InvalidParameter(f"feature_fraction must be in (0, 1], got {feature_fraction}")
        self.n_trees = n_trees
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature_fraction = feature_fraction
        self.bootstrap = bootstrap
        self.seed = seed

    def _n_candidates(self, p: int) -> int:
        if self.feature_fraction is None:
            return max(1, int(math.sqrt(p)))
        return max(1, min(p, int(round(self.feature_fraction * p))))

    def _fit(self, X, y, kind) -> None:
        n = X.shape[0]
        m = self._n_candidates(X.shape[1])
        self.trees_ = []
        for child in np.random.SeedSequence(self.seed).spawn(self.n_trees):
            rng = np.random.default_rng(child)
            idx = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            self.trees_.append(
                _grow_tree(X, y, idx, 0, self.criterion, self.max_depth, self.min_leaf, m, rng)
            )

    def _scores(self, X):
        votes = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees_:
            votes += (_tree_scores(tree, X) > 0.5).astype(np.float64)
        return votes / len(self.trees_)


class KNearestNeighbors(Classifier):
    """Euclidean kNN; neighbor rank ties break toward the earlier training
    row (rows are in app-id order), vote ties toward Benign."""

    _fit_attr = "X_"

    def __init__(self, k: int = 5, seed: int = 0) -> None:
        if k < 1:
            raise InvalidParameter(f"k must be >= 1, got {k}")
        self.k = k
        self.seed = seed

    def _fit(self, X, y, kind) -> None:
        if self.k > X.shape[0]:
            raise InvalidParameter(f"k={self.k} exceeds {X.shape[0]} training rows")
        self.X_ = X
        self.y_ = y

    def _scores(self, X):
        out = np.empty(X.shape[0], dtype=np.float64)
        for i, row in enumerate(X):
            d2 = ((self.X_ - row) ** 2).sum(axis=1)
            nearest = np.argsort(d2, kind="stable")[: self.k]
            out[i] = self.y_[nearest].mean()
        return out


class NaiveBayes(Classifier):
    """Bernoulli or Gaussian naive Bayes; variant "auto" picks Bernoulli for
    Binary matrices and Gaussian otherwise. Scores are malware posteriors and
    the two class posteriors sum to 1."""

    _fit_attr = "log_prior_"

    def __init__(self, variant: str = "auto", alpha: float = 1.0, seed: int = 0) -> None:
        if variant not in ("auto", "bernoulli", "gaussian"):
            raise InvalidParameter(f"unknown variant {variant!r}")
        if alpha <= 0:
            raise InvalidParameter(f"alpha must be > 0, got {alpha}")
        self.variant = variant
        self.alpha = alpha
        self.seed = seed

    def _fit(self, X, y, kind) -> None:
        if self.variant == "auto":
            self.variant_ = "bernoulli" if kind is MatrixKind.BINARY else "gaussian"
        else:
            self.variant_ = self.variant
        counts = np.array([(y == 0).sum(), (y == 1).sum()], dtype=np.float64)
        self.log_prior_ = np.log(counts / counts.sum())
        if self.variant_ == "bernoulli":
            B = (X > 0).astype(np.float64)
            ones = np.stack([B[y == 0].sum(axis=0), B[y == 1].sum(axis=0)])
            theta = (ones + self.alpha) / (counts[:, None] + 2 * self.alpha)
            self.log_theta_ = np.log(theta)
            self.log_theta_c_ = np.log1p(-theta)
        else:
            self.mean_ = np.stack([X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)])
            var = np.stack([X[y == 0].var(axis=0), X[y == 1].var(axis=0)])
            self.var_ = np.maximum(var, _VAR_FLOOR)

    def _joint(self, X: np.ndarray) -> np.ndarray:
        if self.variant_ == "bernoulli":
            B = (X > 0).astype(np.float64)
            return self.log_prior_ + np.stack(
                [B @ self.log_theta_[c] + (1 - B) @ self.log_theta_c_[c] for c in (0, 1)],
                axis=1,
            )
        ll = np.stack(
            [
                -0.5 * (np.log(2 * np.pi * self.var_[c]) + (X - self.mean_[c]) ** 2 / self.var_[c]).sum(
                    axis=1
                )
                for c in (0, 1)
            ],
            axis=1,
        )
        return self.log_prior_ + ll

    def predict_posteriors(self, matrix) -> np.ndarray:
        """Both class posteriors, normalized via log-sum-exp."""
        joint = self._joint(self._check_input(matrix))
        joint -= joint.max(axis=1, keepdims=True)
        post = np.exp(joint)
        return post / post.sum(axis=1, keepdims=True)

    def _scores(self, X):
        joint = self._joint(X)
        joint -= joint.max(axis=1, keepdims=True)
        post = np.exp(joint)
        return post[:, 1] / post.sum(axis=1)


class _LinearModel(Classifier):
    """Full-batch gradient descent over standardized columns."""

    _fit_attr = "w_"

    def _standardize_fit(self, X: np.ndarray) -> np.ndarray:
        self.mu_ = X.mean(axis=0)
        self.sigma_ = np.maximum(X.std(axis=0), _STD_FLOOR)
        return (X - self.mu_) / self.sigma_

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mu_) / self.sigma_


class LogisticRegression(_LinearModel):
    """Scores are sigmoid probabilities; z = 0 therefore predicts Benign."""

    def __init__(self, lr: float = 0.1, epochs: int = 200, l2: float = 0.0, seed: int = 0) -> None:
        if lr <= 0 or epochs < 1 or l2 < 0:
            raise InvalidParameter("need lr > 0, epochs >= 1, l2 >= 0")
        self.lr = lr
        self.epochs = epochs
        self.l2 = l2
        self.seed = seed

    @staticmethod
    def loss_and_grad(w, b, X, y, l2):
        """Mean log-loss plus l2/2*||w||^2, with exact analytic gradients."""
        z = X @ w + b
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
        p = 1.0 / (1.0 + np.exp(-z))
        grad_w = X.T @ (p - y) / X.shape[0] + l2 * w
        grad_b = float(np.mean(p - y))
        return loss, grad_w, grad_b

    def _fit(self, X, y, kind) -> None:
        Z = self._standardize_fit(X)
        yf = y.astype(np.float64)
        self.w_ = np.zeros(X.shape[1])
        self.b_ = 0.0
        for _ in range(self.epochs):
            _, gw, gb = self.loss_and_grad(self.w_, self.b_, Z, yf, self.l2)
            self.w_ -= self.lr * gw
            self.b_ -= self.lr * gb

    def _scores(self, X):
        z = self._standardize(X) @ self.w_ + self.b_
        return 1.0 / (1.0 + np.exp(-z))


class LinearSVM(_LinearModel):
    """Hinge-loss subgradient descent; scores are raw margins and the
    decision threshold is 0, so a zero margin predicts Benign."""

    decision_threshold = 0.0

    def __init__(self, c: float = 1.0, lr: float = 0.1, epochs: int = 200, seed: int = 0) -> None:
        if c <= 0 or lr <= 0 or epochs < 1:
            raise InvalidParameter("need c > 0, lr > 0, epochs >= 1")
        self.c = c
        self.lr = lr
        self.epochs = epochs
        self.seed = seed

    def _fit(self, X, y, kind) -> None:
        Z = self._standardize_fit(X)
        ys = np.where(y == 1, 1.0, -1.0)
        n = X.shape[0]
        self.w_ = np.zeros(X.shape[1])
        self.b_ = 0.0
        for _ in range(self.epochs):
            margin = ys * (Z @ self.w_ + self.b_)
            viol = margin < 1
            gw = self.w_ / (self.c * n) - (ys[viol, None] * Z[viol]).sum(axis=0) / n
            gb = -ys[viol].sum() / n
            self.w_ -= self.lr * gw
            self.b_ -= self.lr * gb

    def _scores(self, X):
        return self._standardize(X) @ self.w_ + self.b_


MODEL_KINDS: dict[str, type[Classifier]] = {
    "dt": DecisionTree,
    "rf": RandomForest,
    "knn": KNearestNeighbors,
    "nb": NaiveBayes,
    "logreg": LogisticRegression,
    "svm": LinearSVM,
}


def make_model(kind: str, params: dict | None = None) -> Classifier:
    if kind not in MODEL_KINDS:
        raise InvalidParameter(f"unknown model kind {kind!r}")
    return MODEL_KINDS[kind](**(params or {}))


def model_kind(model: Classifier) -> str:
    for kind, cls in MODEL_KINDS.items():
        if type(model) is cls:
            return kind
    raise InvalidParameter(f"unregistered model type {type(model).__name__}")


def _jsonify(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    return value


_STATE_ATTRS = {
    "dt": ["tree_"],
    "rf": ["trees_"],
    "knn": ["X_", "y_"],
    "nb": ["variant_", "log_prior_", "log_theta_", "log_theta_c_", "mean_", "var_"],
    "logreg": ["mu_", "sigma_", "w_", "b_"],
    "svm": ["mu_", "sigma_", "w_", "b_"],
}

_ARRAY_ATTRS = {
    "X_": np.float64,
    "y_": np.int64,
    "log_prior_": np.float64,
    "log_theta_": np.float64,
    "log_theta_c_": np.float64,
    "mean_": np.float64,
    "var_": np.float64,
    "mu_": np.float64,
    "sigma_": np.float64,
    "w_": np.float64,
}


def serialize_model(model: Classifier) -> str:
    """Stable JSON text; training twice on the same input yields identical
    bytes."""
    model._check_fitted(model._fit_attr)
    kind = model_kind(model)
    state = {}
    for attr in _STATE_ATTRS[kind]:
        if hasattr(model, attr):
            state[attr] = _jsonify(getattr(model, attr))
    doc = {
        "format": "droidml-model",
        "kind": kind,
        "params": _jsonify(model.get_params()),
        "n_features": int(model.n_features_),
        "vocab_fingerprint": model.vocab_fingerprint_,
        "state": state,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def deserialize_model(text: str) -> Classifier:
    doc = json.loads(text)
    if doc.get("format") != "droidml-model":
        raise InvalidParameter("not a model file")
    model = make_model(doc["kind"], doc["params"])
    model.n_features_ = int(doc["n_features"])
    model.vocab_fingerprint_ = doc["vocab_fingerprint"]
    for attr, value in doc["state"].items():
        if attr in _ARRAY_ATTRS and isinstance(value, list):
            value = np.asarray(value, dtype=_ARRAY_ATTRS[attr])
        setattr(model, attr, value)
    return model


def save_model(model: Classifier, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(serialize_model(model))


def load_model(path) -> Classifier:
    with open(path, "r", encoding="utf-8") as handle:
        return deserialize_model(handle.read())


@dataclass(frozen=True)
class GridSearchResult:
    params: dict
    mean_accuracy: float
    trials: tuple[tuple[dict, float], ...]


def expand_grid(grid) -> list[dict]:
    """A dict of value lists expands to the cross product, varying the last
    key fastest; a list of dicts is taken in order."""
    if isinstance(grid, list):
        return [dict(g) for g in grid]
    keys = list(grid)
    combos = [{}]
    for key in keys:
        values = grid[key]
        combos = [{**combo, key: value} for combo in combos for value in values]
    return combos


def grid_search(kind: str, grid, matrix, labels, k: int = 3, seed: int = 0) -> GridSearchResult:
    """Picks the grid point with the best mean fold accuracy under
    stratified k-fold; ties keep the earlier grid point."""
    from .evaluation import stratified_kfold

    X, y, _, mkind = _prepare_fit(matrix, labels)
    candidates = expand_grid(grid)
    if not candidates:
        raise InvalidParameter("empty parameter grid")
    folds = stratified_kfold(y, k, seed)
    best: tuple[dict, float] | None = None
    trials = []
    for params in candidates:
        accs = []
        for train_idx, test_idx in folds:
            model = make_model(kind, params)
            model.n_features_ = X.shape[1]
            model.vocab_fingerprint_ = None
            model._fit(X[train_idx], y[train_idx], mkind)
            pred = model.predict(X[test_idx])
            accs.append(float((pred == y[test_idx]).mean()))
        mean_acc = float(np.mean(accs))
        trials.append((params, mean_acc))
        if best is None or mean_acc > best[1]:
            best = (params, mean_acc)
    return GridSearchResult(best[0], best[1], tuple(trials))

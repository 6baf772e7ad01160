"""Classifier behavior: separability, determinism, serialization, tie rules."""

from __future__ import annotations

import numpy as np
import pytest
from sklearn.naive_bayes import BernoulliNB, GaussianNB
from sklearn.neighbors import KNeighborsClassifier

from droidml.encoding import MatrixKind, Vocabulary
from droidml.errors import (
    DegenerateLabels,
    DimensionMismatch,
    InvalidParameter,
    NotFittedError,
    VocabMismatch,
)
from droidml.models import (
    DecisionTree,
    GridSearchResult,
    KNearestNeighbors,
    LinearSVM,
    LogisticRegression,
    NaiveBayes,
    RandomForest,
    deserialize_model,
    expand_grid,
    grid_search,
    load_model,
    make_model,
    save_model,
    serialize_model,
)

from conftest import matrix_from_array


def separable(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, 4))
    X[:, 0] = y * 4.0 + rng.normal(scale=0.1, size=n)
    return X, y


def distinct_rows(rng: np.random.Generator, n: int = 24, p: int = 6) -> np.ndarray:
    while True:
        X = rng.integers(0, 2, size=(n, p)).astype(float)
        if len({tuple(r) for r in X}) == n:
            return X


# ---------------------------------------------------------------------------
# decision tree


def test_tree_depth_one_separates_single_feature():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([0, 0, 1, 1])
    model = DecisionTree().fit(X, y)
    assert model.tree_["leaf"] is False
    assert model.tree_["left"]["leaf"] and model.tree_["right"]["leaf"]
    assert model.predict(X).tolist() == y.tolist()


def test_tree_fits_consistent_data_perfectly(rng: np.random.Generator):
    for _ in range(5):
        X = distinct_rows(rng)
        y = rng.integers(0, 2, len(X))
        if len(set(y.tolist())) < 2:
            continue
        model = DecisionTree(max_depth=None, min_leaf=1).fit(X, y)
        assert (model.predict(X) == y).all()


def test_tree_entropy_criterion_also_separates():
    X = np.array([[0.0, 1.0], [1.0, 1.0], [0.0, 0.0], [1.0, 0.0]])
    y = np.array([0, 1, 0, 1])  # xor-free: second column is noise
    model = DecisionTree(criterion="entropy").fit(X, y)
    assert (model.predict(X) == y).all()


def test_tree_respects_depth_and_leaf_bounds():
    X = np.arange(8, dtype=float).reshape(-1, 1)
    y = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    stump = DecisionTree(max_depth=0).fit(X, y)
    assert stump.tree_["leaf"]
    assert stump.predict(X).tolist() == [0] * 8
    big_leaf = DecisionTree(min_leaf=4).fit(X, y)

    def depth(node) -> int:
        if node["leaf"]:
            return 0
        return 1 + max(depth(node["left"]), depth(node["right"]))

    assert depth(big_leaf.tree_) <= 1


def test_tree_parameter_validation():
    with pytest.raises(InvalidParameter):
        DecisionTree(criterion="twoing")
    with pytest.raises(InvalidParameter):
        DecisionTree(min_leaf=0)
    with pytest.raises(DegenerateLabels):
        DecisionTree().fit(np.zeros((3, 1)), np.array([1, 1, 1]))


# ---------------------------------------------------------------------------
# random forest


def test_degenerate_forest_equals_tree(rng: np.random.Generator):
    X, y = separable(40, rng)
    forest = RandomForest(n_trees=1, bootstrap=False, feature_fraction=1.0, seed=3).fit(X, y)
    tree = DecisionTree(seed=3).fit(X, y)
    probe, _ = separable(60, rng)
    assert forest.predict(probe).tolist() == tree.predict(probe).tolist()


def test_forest_is_deterministic_and_row_order_free(rng: np.random.Generator):
    X, y = separable(30, rng)
    m = matrix_from_array(X, MatrixKind.NUMERIC)
    a = serialize_model(RandomForest(n_trees=7, seed=5).fit(m, y))
    b = serialize_model(RandomForest(n_trees=7, seed=5).fit(m, y))
    assert a == b
    perm = rng.permutation(len(y))
    shuffled = m.select_rows(perm.tolist())
    c = serialize_model(RandomForest(n_trees=7, seed=5).fit(shuffled, y[perm]))
    assert c == a


def test_forest_scores_are_vote_fractions(rng: np.random.Generator):
    X, y = separable(30, rng)
    model = RandomForest(n_trees=9, seed=1).fit(X, y)
    scores = model.predict_scores(X)
    assert np.all((scores * 9) % 1 == pytest.approx(0.0, abs=1e-12))
    assert np.array_equal(model.predict(X), (scores > 0.5).astype(int))


def test_forest_parameter_validation():
    with pytest.raises(InvalidParameter):
        RandomForest(n_trees=0)
    with pytest.raises(InvalidParameter):
        RandomForest(feature_fraction=1.5)


# ---------------------------------------------------------------------------
# k-nearest-neighbors


def test_knn_recalls_training_rows(rng: np.random.Generator):
    X = distinct_rows(rng)
    y = rng.integers(0, 2, len(X))
    y[:2] = [0, 1]
    model = KNearestNeighbors(k=1).fit(X, y)
    assert (model.predict(X) == y).all()


def test_knn_vote_tie_predicts_benign():
    X = np.array([[0.0], [2.0]])
    y = np.array([1, 0])
    model = KNearestNeighbors(k=2).fit(X, y)
    assert model.predict_scores(np.array([[1.0]]))[0] == 0.5
    assert model.predict(np.array([[1.0]]))[0] == 0


def test_knn_matches_reference_fractions(rng: np.random.Generator):
    X = rng.normal(size=(40, 5))
    y = rng.integers(0, 2, 40)
    y[:2] = [0, 1]
    probe = rng.normal(size=(15, 5))
    for k in (1, 3, 5):
        ours = KNearestNeighbors(k=k).fit(X, y).predict_scores(probe)
        ref = KNeighborsClassifier(n_neighbors=k).fit(X, y).predict_proba(probe)[:, 1]
        assert ours == pytest.approx(ref, abs=1e-12)


def test_knn_k_validation():
    with pytest.raises(InvalidParameter):
        KNearestNeighbors(k=0)
    with pytest.raises(InvalidParameter):
        KNearestNeighbors(k=5).fit(np.zeros((3, 1)), np.array([0, 1, 0]))


# ---------------------------------------------------------------------------
# naive Bayes


def test_nb_posteriors_sum_to_one(rng: np.random.Generator):
    X = rng.integers(0, 2, size=(30, 6)).astype(float)
    y = rng.integers(0, 2, 30)
    y[:2] = [0, 1]
    m = matrix_from_array(X.astype(int), MatrixKind.BINARY)
    model = NaiveBayes().fit(m, y)
    post = model.predict_posteriors(m)
    assert post.sum(axis=1) == pytest.approx(np.ones(30), abs=1e-12)
    assert model.predict_scores(m) == pytest.approx(post[:, 1], abs=1e-12)


def test_nb_variant_auto_follows_matrix_kind(rng: np.random.Generator):
    y = np.array([0, 1, 0, 1])
    binary = matrix_from_array(np.eye(4, dtype=int), MatrixKind.BINARY)
    numeric = matrix_from_array(rng.normal(size=(4, 4)), MatrixKind.NUMERIC)
    assert NaiveBayes().fit(binary, y).variant_ == "bernoulli"
    assert NaiveBayes().fit(numeric, y).variant_ == "gaussian"
    assert NaiveBayes(variant="gaussian").fit(binary, y).variant_ == "gaussian"


def test_nb_neutral_features_fall_back_to_prior():
    # the feature is present in half of each class, so it carries no signal
    X = np.array([[1], [1], [0], [0], [1], [0]], dtype=float)
    y = np.array([0, 0, 0, 0, 1, 1])
    m = matrix_from_array(X.astype(int), MatrixKind.BINARY)
    model = NaiveBayes().fit(m, y)
    zero_row = matrix_from_array(np.zeros((1, 1), dtype=int), MatrixKind.BINARY)
    zero_row.vocab = m.vocab
    assert model.predict(zero_row)[0] == 0
    flipped = NaiveBayes().fit(m, 1 - y)
    assert flipped.predict(zero_row)[0] == 1


def test_bernoulli_nb_matches_reference(rng: np.random.Generator):
    X = rng.integers(0, 2, size=(40, 8)).astype(float)
    y = rng.integers(0, 2, 40)
    y[:2] = [0, 1]
    m = matrix_from_array(X.astype(int), MatrixKind.BINARY)
    ours = NaiveBayes(alpha=1.0).fit(m, y).predict_posteriors(m)
    ref = BernoulliNB(alpha=1.0).fit(X, y).predict_proba(X)
    assert ours == pytest.approx(ref, abs=1e-9)


def test_gaussian_nb_matches_reference(rng: np.random.Generator):
    X = rng.normal(loc=2.0, size=(50, 4))
    y = rng.integers(0, 2, 50)
    y[:2] = [0, 1]
    X[y == 1] += 1.0
    ours = NaiveBayes(variant="gaussian").fit(X, y).predict_scores(X)
    ref = GaussianNB(var_smoothing=0.0).fit(X, y).predict_proba(X)[:, 1]
    assert ours == pytest.approx(ref, abs=1e-6)


def test_nb_parameter_validation():
    with pytest.raises(InvalidParameter):
        NaiveBayes(variant="multinomial")
    with pytest.raises(InvalidParameter):
        NaiveBayes(alpha=0.0)


# ---------------------------------------------------------------------------
# linear models


def test_logreg_gradient_matches_finite_differences(rng: np.random.Generator):
    X = rng.normal(size=(12, 5))
    y = rng.integers(0, 2, 12).astype(float)
    w = rng.normal(size=5)
    b = float(rng.normal())
    l2 = 0.3
    loss, grad_w, grad_b = LogisticRegression.loss_and_grad(w, b, X, y, l2)
    eps = 1e-6
    for j in range(5):
        bump = np.zeros(5)
        bump[j] = eps
        hi, _, _ = LogisticRegression.loss_and_grad(w + bump, b, X, y, l2)
        lo, _, _ = LogisticRegression.loss_and_grad(w - bump, b, X, y, l2)
        assert grad_w[j] == pytest.approx((hi - lo) / (2 * eps), rel=1e-5, abs=1e-8)
    hi, _, _ = LogisticRegression.loss_and_grad(w, b + eps, X, y, l2)
    lo, _, _ = LogisticRegression.loss_and_grad(w, b - eps, X, y, l2)
    assert grad_b == pytest.approx((hi - lo) / (2 * eps), rel=1e-5, abs=1e-8)


def test_logreg_descent_reduces_loss_and_separates(rng: np.random.Generator):
    X, y = separable(60, rng)
    model = LogisticRegression(lr=0.5, epochs=300).fit(X, y)
    assert (model.predict(X) == y).mean() >= 0.99
    scores = model.predict_scores(X)
    assert np.all((scores >= 0) & (scores <= 1))


def test_logreg_zero_state_predicts_benign():
    model = LogisticRegression()
    model.n_features_ = 2
    model.vocab_fingerprint_ = None
    model.mu_ = np.zeros(2)
    model.sigma_ = np.ones(2)
    model.w_ = np.zeros(2)
    model.b_ = 0.0
    X = np.array([[3.0, -1.0], [0.0, 0.0]])
    assert model.predict_scores(X).tolist() == [0.5, 0.5]
    assert model.predict(X).tolist() == [0, 0]


def test_svm_separates_2d(rng: np.random.Generator):
    n = 50
    y = rng.integers(0, 2, n)
    X = rng.normal(size=(n, 2))
    X[:, 0] += y * 5.0
    model = LinearSVM(c=100.0, epochs=400).fit(X, y)
    assert (model.predict(X) == y).all()
    margins = model.predict_scores(X)
    assert np.array_equal(model.predict(X), (margins > 0).astype(int))


def test_svm_zero_margin_predicts_benign():
    model = LinearSVM()
    model.n_features_ = 1
    model.vocab_fingerprint_ = None
    model.mu_ = np.zeros(1)
    model.sigma_ = np.ones(1)
    model.w_ = np.zeros(1)
    model.b_ = 0.0
    assert model.predict(np.array([[9.0]])).tolist() == [0]


def test_linear_model_parameter_validation():
    with pytest.raises(InvalidParameter):
        LogisticRegression(lr=0.0)
    with pytest.raises(InvalidParameter):
        LogisticRegression(epochs=0)
    with pytest.raises(InvalidParameter):
        LogisticRegression(l2=-1.0)
    with pytest.raises(InvalidParameter):
        LinearSVM(c=0.0)


# ---------------------------------------------------------------------------
# shared contract


ALL_KINDS = ("dt", "rf", "knn", "nb", "logreg", "svm")


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_scores_agree_with_predictions(kind: str, rng: np.random.Generator):
    X, y = separable(30, rng)
    model = make_model(kind, {"k": 3} if kind == "knn" else None).fit(X, y)
    scores = model.predict_scores(X)
    assert np.array_equal(model.predict(X), (scores > model.decision_threshold).astype(int))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_serialize_round_trip(kind: str, rng: np.random.Generator):
    X, y = separable(25, rng)
    m = matrix_from_array(X, MatrixKind.NUMERIC)
    model = make_model(kind, {"k": 3} if kind == "knn" else None).fit(m, y)
    text = serialize_model(model)
    clone = deserialize_model(text)
    assert clone.predict_scores(m) == pytest.approx(model.predict_scores(m), abs=1e-12)
    assert serialize_model(clone) == text
    assert clone.vocab_fingerprint_ == m.vocab.fingerprint()


def test_save_and_load_model(tmp_path, rng: np.random.Generator):
    X, y = separable(20, rng)
    model = DecisionTree().fit(X, y)
    path = tmp_path / "model.json"
    save_model(model, path)
    assert load_model(path).predict(X).tolist() == model.predict(X).tolist()
    with pytest.raises(InvalidParameter):
        deserialize_model('{"format": "something-else"}')


def test_vocab_fingerprint_guard(rng: np.random.Generator):
    X, y = separable(20, rng)
    m = matrix_from_array(X, MatrixKind.NUMERIC)
    model = DecisionTree().fit(m, y)
    other = matrix_from_array(X, MatrixKind.NUMERIC)
    other.vocab = Vocabulary(tuple(f"g{j}" for j in range(4)), MatrixKind.NUMERIC)
    with pytest.raises(VocabMismatch):
        model.predict(other)
    # plain arrays skip the fingerprint check but not the shape check
    assert model.predict(X).shape == (20,)
    with pytest.raises(DimensionMismatch):
        model.predict(X[:, :2])


def test_not_fitted_guard():
    with pytest.raises(NotFittedError):
        DecisionTree().predict(np.zeros((1, 1)))
    with pytest.raises(NotFittedError):
        LinearSVM().predict_scores(np.zeros((1, 1)))


def test_make_model_and_params():
    model = make_model("rf", {"n_trees": 5, "seed": 2})
    assert isinstance(model, RandomForest)
    assert model.get_params()["n_trees"] == 5
    with pytest.raises(InvalidParameter):
        make_model("mlp")


# ---------------------------------------------------------------------------
# grid search


def test_expand_grid_orders():
    assert expand_grid({"a": [1, 2], "b": [3, 4]}) == [
        {"a": 1, "b": 3},
        {"a": 1, "b": 4},
        {"a": 2, "b": 3},
        {"a": 2, "b": 4},
    ]
    assert expand_grid([{"k": 1}, {"k": 5}]) == [{"k": 1}, {"k": 5}]
    assert expand_grid({}) == [{}]


def test_grid_search_single_point(rng: np.random.Generator):
    X, y = separable(24, rng)
    result = grid_search("dt", [{"max_depth": 2}], X, y, k=3, seed=0)
    assert result.params == {"max_depth": 2}
    assert len(result.trials) == 1
    assert isinstance(result, GridSearchResult)


def test_grid_search_finds_separating_params(rng: np.random.Generator):
    X, y = separable(30, rng)
    result = grid_search("knn", {"k": [1, 3]}, X, y, k=3, seed=0)
    assert result.mean_accuracy == 1.0


def test_grid_search_tie_keeps_earlier_point(rng: np.random.Generator):
    X, y = separable(24, rng)
    # both depths separate this data perfectly, so scores tie
    result = grid_search("dt", {"max_depth": [4, 8]}, X, y, k=3, seed=0)
    trials = dict((tuple(p.items()), acc) for p, acc in result.trials)
    if trials[(("max_depth", 4),)] == trials[(("max_depth", 8),)]:
        assert result.params == {"max_depth": 4}


def test_grid_search_rejects_empty_grid(rng: np.random.Generator):
    X, y = separable(12, rng)
    with pytest.raises(InvalidParameter):
        grid_search("dt", [], X, y)

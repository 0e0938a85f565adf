import numpy as np
import pytest

from prunembed.classifier import (
    ClassifierHead,
    TrainSettings,
    _loss_and_grad,
    accuracy,
    load_head,
    predict,
    predict_labels,
    save_head,
    train_head,
    weighted_metrics,
)
from prunembed.errors import ConfigError, DataError, ShapeError


def finite_difference_grads(W, b, X, y_onehot, lam, h=1e-5):
    """Independent oracle: central differences of the loss, one parameter
    at a time. Verifies the analytic gradient without sharing any code
    with it beyond the loss value itself."""

    def loss_at(Wx, bx):
        return _loss_and_grad(Wx, bx, X, y_onehot, lam)[0]

    grad_w = np.zeros_like(W)
    for idx in np.ndindex(*W.shape):
        delta = np.zeros_like(W)
        delta[idx] = h
        grad_w[idx] = (loss_at(W + delta, b) - loss_at(W - delta, b)) / (2 * h)
    grad_b = np.zeros_like(b)
    for i in range(b.size):
        delta = np.zeros_like(b)
        delta[i] = h
        grad_b[i] = (loss_at(W, b + delta) - loss_at(W, b - delta)) / (2 * h)
    return grad_w, grad_b


def random_problem(rng, n=24, d=8, c=3):
    X = rng.normal(size=(n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = rng.integers(0, c, size=n)
    y[:c] = np.arange(c)  # every class present
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0
    return X, y, onehot


class TestGradient:
    def test_analytic_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            X, _, onehot = random_problem(rng)
            W = rng.normal(scale=0.5, size=(3, 8))
            b = rng.normal(scale=0.5, size=3)
            lam = float(rng.uniform(0, 0.1))
            _, grad_w, grad_b = _loss_and_grad(W, b, X, onehot, lam)
            fd_w, fd_b = finite_difference_grads(W, b, X, onehot, lam)
            scale_w = np.maximum(np.abs(fd_w), 1e-6)
            scale_b = np.maximum(np.abs(fd_b), 1e-6)
            assert (np.abs(grad_w - fd_w) / scale_w).max() < 1e-4
            assert (np.abs(grad_b - fd_b) / scale_b).max() < 1e-4


class TestTrainHead:
    def test_separates_antipodal_classes(self):
        rng = np.random.default_rng(0)
        e = rng.normal(size=8)
        e /= np.linalg.norm(e)
        X = np.stack([e, -e, e, -e])
        head = train_head(X, [0, 1, 0, 1])
        assert accuracy(head, X, [0, 1, 0, 1]) == 1.0

    def test_huge_l2_drives_weights_to_zero(self):
        rng = np.random.default_rng(1)
        X, y, _ = random_problem(rng)
        head = train_head(X, y, TrainSettings(l2_lambda=1e6))
        assert np.abs(head.weights).max() < 1e-3

    def test_loss_curve_non_increasing(self):
        rng = np.random.default_rng(2)
        X, y, _ = random_problem(rng, n=40)
        head = train_head(X, y)
        curve = np.array(head.loss_curve)
        assert (np.diff(curve) <= 0).all()

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        X, y, _ = random_problem(rng)
        a = train_head(X, y)
        b = train_head(X, y)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)

    def test_missing_class_is_degenerate(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(4, 8))
        with pytest.raises(DataError, match="degenerate task"):
            train_head(X, [0, 0, 2, 2])  # label 1 absent

    def test_single_class_is_degenerate(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(4, 8))
        with pytest.raises(DataError, match="degenerate task"):
            train_head(X, [0, 0, 0, 0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError, match="shape error"):
            train_head(np.zeros((4, 8)), [0, 1, 0])

    def test_invalid_settings(self):
        with pytest.raises(ConfigError, match="config error"):
            TrainSettings(tol=0.0)
        with pytest.raises(ConfigError, match="config error"):
            TrainSettings(l2_lambda=-1.0)


class TestPredict:
    def test_zero_head_is_uniform_and_ties_to_label_zero(self):
        head = ClassifierHead(np.zeros((4, 8)), np.zeros(4), ("a", "b", "c", "d"))
        label, probs = predict(head, np.ones(8) / np.sqrt(8))
        assert label == 0
        assert np.allclose(probs, 0.25, atol=1e-12)

    def test_probabilities_are_a_distribution(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            head = ClassifierHead(rng.normal(size=(5, 8)), rng.normal(size=5), tuple("abcde"))
            _, probs = predict(head, rng.normal(size=8))
            assert (probs >= 0).all()
            assert abs(probs.sum() - 1.0) < 1e-6

    def test_positive_scaling_keeps_argmax(self):
        rng = np.random.default_rng(7)
        W = rng.normal(size=(3, 8))
        x = rng.normal(size=8)
        head = ClassifierHead(W, np.zeros(3), ("a", "b", "c"))
        scaled = ClassifierHead(3.7 * W, np.zeros(3), ("a", "b", "c"))
        assert predict(head, x)[0] == predict(scaled, x)[0]

    def test_dimension_mismatch(self):
        head = ClassifierHead(np.zeros((3, 8)), np.zeros(3), ("a", "b", "c"))
        with pytest.raises(ShapeError, match="shape error"):
            predict(head, np.zeros(5))


class TestAccuracy:
    def test_all_correct(self):
        rng = np.random.default_rng(8)
        X, y, _ = random_problem(rng)
        head = train_head(X, y, TrainSettings(max_iters=2000))
        pred = predict_labels(head, X)
        assert accuracy(head, X, pred) == 1.0

    def test_zero_head_on_balanced_classes(self):
        # A zero head always predicts label 0, so on three balanced
        # classes exactly one third of predictions are right.
        head = ClassifierHead(np.zeros((3, 4)), np.zeros(3), ("a", "b", "c"))
        X = np.ones((9, 4))
        assert accuracy(head, X, [0, 1, 2] * 3) == pytest.approx(1 / 3)

    def test_empty_evaluation(self):
        head = ClassifierHead(np.zeros((3, 4)), np.zeros(3), ("a", "b", "c"))
        with pytest.raises(DataError, match="empty evaluation"):
            accuracy(head, np.zeros((0, 4)), [])


class TestWeightedMetrics:
    def test_hand_computed_case(self):
        # Predictions fixed by a head that always outputs label 0.
        head = ClassifierHead(np.zeros((2, 2)), np.array([1.0, 0.0]), ("a", "b"))
        X = np.eye(2)[[0, 0, 1, 1]]
        y = [0, 0, 1, 1]
        m = weighted_metrics(head, X, y)
        # All four predictions are label 0: recall = (1.0*2 + 0.0*2)/4,
        # precision for class 0 = 0.5, class 1 undefined -> 0.
        assert m["accuracy"] == pytest.approx(0.5)
        assert m["weighted_recall"] == pytest.approx(0.5)
        assert m["weighted_precision"] == pytest.approx(0.25)
        assert m["weighted_f1"] == pytest.approx(1 / 3)

    def test_matches_sklearn_when_available(self):
        sk = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(9)
        X, y, _ = random_problem(rng, n=60, d=8, c=4)
        head = train_head(X, y, TrainSettings(max_iters=50))
        pred = predict_labels(head, X)
        m = weighted_metrics(head, X, y)
        p, r, f1, _ = sk.precision_recall_fscore_support(
            y, pred, average="weighted", zero_division=0, labels=range(4)
        )
        assert m["weighted_precision"] == pytest.approx(p)
        assert m["weighted_recall"] == pytest.approx(r)
        assert m["weighted_f1"] == pytest.approx(f1)


class TestSerialization:
    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(10)
        X, y, _ = random_problem(rng)
        head = train_head(X, y, label_names=["alpha", "beta", "gamma"])
        save_head(head, tmp_path / "head")
        loaded = load_head(tmp_path / "head")
        assert loaded.label_names == ("alpha", "beta", "gamma")
        # Disk format is float32; predictions agree to that precision.
        assert np.allclose(loaded.weights, head.weights, atol=1e-6)
        assert np.array_equal(predict_labels(loaded, X), predict_labels(head, X))

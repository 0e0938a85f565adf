"""Multinomial logistic-regression head over frozen sentence embeddings.

Training minimizes mean cross-entropy + l2_lambda * ||W||^2 / 2 by
full-batch gradient descent with backtracking (Armijo) line search from a
zero initialization. The problem is convex, so the optimum has no seed
dependence; few-shot training sets are tiny, which makes full-batch both
exact and fast. Heads are immutable after training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .archive import read_tensors, write_tensors
from .errors import ConfigError, DataError, ShapeError

_ARMIJO_C = 1e-4
_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class TrainSettings:
    l2_lambda: float = 1e-4
    max_iters: int = 500
    tol: float = 1e-6
    seed: int = 0  # reserved for optional mini-batching; unused by default

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ConfigError("config error: l2_lambda must be >= 0")
        if self.max_iters < 1:
            raise ConfigError("config error: max_iters must be >= 1")
        if not self.tol > 0:
            raise ConfigError("config error: tol must be > 0")


@dataclass(frozen=True)
class ClassifierHead:
    """Trained head: (C, d_model) weights, (C,) biases, C label names.

    loss_curve records the objective at every accepted iterate; it is a
    training diagnostic, not part of the serialized head.
    """

    weights: np.ndarray
    biases: np.ndarray
    label_names: tuple[str, ...]
    loss_curve: tuple[float, ...] = field(default=(), compare=False)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _loss_and_grad(W, b, X, y_onehot, lam):
    logits = X @ W.T + b
    log_probs = _log_softmax(logits)
    loss = -(y_onehot * log_probs).sum() / X.shape[0] + lam * (W * W).sum() / 2.0
    probs = np.exp(log_probs)
    delta = (probs - y_onehot) / X.shape[0]
    grad_w = delta.T @ X + lam * W
    grad_b = delta.sum(axis=0)
    return loss, grad_w, grad_b


def train_head(
    embeddings: np.ndarray,
    labels,
    settings: TrainSettings | None = None,
    label_names=None,
) -> ClassifierHead:
    """Fit a head on (N, d) embeddings and integer label ids 0..C-1.

    Deterministic for fixed inputs and settings. Raises "degenerate task"
    when any label id in the range has no examples.
    """
    settings = settings or TrainSettings()
    X = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"shape error: embeddings {X.shape} vs labels {y.shape}")
    if X.shape[0] == 0:
        raise DataError("degenerate task: no training examples")
    n_classes = int(y.max()) + 1 if label_names is None else len(label_names)
    if n_classes < 2:
        raise DataError("degenerate task: fewer than two classes")
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"degenerate task: label id outside [0, {n_classes})")
    counts = np.bincount(y, minlength=n_classes)
    for label_id, count in enumerate(counts):
        if count == 0:
            raise DataError(f"degenerate task: label {label_id} has no examples")

    y_onehot = np.zeros((X.shape[0], n_classes), dtype=np.float64)
    y_onehot[np.arange(X.shape[0]), y] = 1.0

    W = np.zeros((n_classes, X.shape[1]), dtype=np.float64)
    b = np.zeros(n_classes, dtype=np.float64)
    loss, grad_w, grad_b = _loss_and_grad(W, b, X, y_onehot, settings.l2_lambda)
    curve = [float(loss)]

    for _ in range(settings.max_iters):
        grad_norm = max(np.abs(grad_w).max(), np.abs(grad_b).max())
        if grad_norm < settings.tol:
            break
        descent = (grad_w * grad_w).sum() + (grad_b * grad_b).sum()
        step = 1.0
        for _ in range(_MAX_BACKTRACKS):
            new_W = W - step * grad_w
            new_b = b - step * grad_b
            new_loss, new_gw, new_gb = _loss_and_grad(new_W, new_b, X, y_onehot, settings.l2_lambda)
            if new_loss <= loss - _ARMIJO_C * step * descent:
                break
            step *= 0.5
        else:
            break  # no acceptable step; gradient is numerically flat
        W, b, loss, grad_w, grad_b = new_W, new_b, new_loss, new_gw, new_gb
        curve.append(float(loss))

    names = tuple(label_names) if label_names is not None else tuple(str(i) for i in range(n_classes))
    return ClassifierHead(weights=W, biases=b, label_names=names, loss_curve=tuple(curve))


def predict(head: ClassifierHead, embedding: np.ndarray) -> tuple[int, np.ndarray]:
    """(argmax label id, probability vector) for one embedding.

    Ties break toward the lower label id.
    """
    x = np.asarray(embedding, dtype=np.float64)
    if x.shape != (head.weights.shape[1],):
        raise ShapeError(f"shape error: embedding {x.shape} vs head width {head.weights.shape[1]}")
    probs = np.exp(_log_softmax((head.weights @ x + head.biases)[None, :]))[0]
    return int(np.argmax(probs)), probs


def predict_labels(head: ClassifierHead, embeddings: np.ndarray) -> np.ndarray:
    """Argmax label ids for (N, d) embeddings; ties toward the lower id."""
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != head.weights.shape[1]:
        raise ShapeError(f"shape error: embeddings {X.shape} vs head width {head.weights.shape[1]}")
    return np.argmax(X @ head.weights.T + head.biases, axis=1)


def accuracy(head: ClassifierHead, embeddings: np.ndarray, labels) -> float:
    """Fraction of argmax predictions equal to gold labels."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise DataError("empty evaluation")
    return float((predict_labels(head, embeddings) == y).mean())


def weighted_metrics(head: ClassifierHead, embeddings: np.ndarray, labels) -> dict[str, float]:
    """Accuracy plus support-weighted precision, recall, and F1."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise DataError("empty evaluation")
    pred = predict_labels(head, embeddings)
    n_classes = head.weights.shape[0]
    precision = np.zeros(n_classes)
    recall = np.zeros(n_classes)
    f1 = np.zeros(n_classes)
    support = np.bincount(y, minlength=n_classes).astype(np.float64)
    for c in range(n_classes):
        tp = float(((pred == c) & (y == c)).sum())
        fp = float(((pred == c) & (y != c)).sum())
        fn = float(((pred != c) & (y == c)).sum())
        precision[c] = tp / (tp + fp) if tp + fp else 0.0
        recall[c] = tp / (tp + fn) if tp + fn else 0.0
        denom = precision[c] + recall[c]
        f1[c] = 2 * precision[c] * recall[c] / denom if denom else 0.0
    weights = support / support.sum()
    return {
        "accuracy": float((pred == y).mean()),
        "weighted_precision": float((weights * precision).sum()),
        "weighted_recall": float((weights * recall).sum()),
        "weighted_f1": float((weights * f1).sum()),
    }


def save_head(head: ClassifierHead, path_prefix: str | Path) -> None:
    """Write <prefix>.json (labels) and <prefix>.safetensors (parameters)."""
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_tensors(prefix.with_suffix(".safetensors"), {"weights": head.weights, "biases": head.biases})
    prefix.with_suffix(".json").write_text(
        json.dumps({"label_names": list(head.label_names)}, indent=2) + "\n", "utf-8"
    )


def load_head(path_prefix: str | Path) -> ClassifierHead:
    prefix = Path(path_prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text("utf-8"))
    tensors = read_tensors(prefix.with_suffix(".safetensors"))
    return ClassifierHead(
        weights=np.asarray(tensors["weights"], dtype=np.float64),
        biases=np.asarray(tensors["biases"], dtype=np.float64),
        label_names=tuple(meta["label_names"]),
    )

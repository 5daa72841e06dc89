"""Market-direction classification heads.

Three heads share one architecture (single hidden ReLU layer into softmax)
and differ only in their input features: the contrastive projection, the raw
encoder embedding, or both concatenated. Heads are trained on real (never
augmented) days, after the projection network is frozen.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .embeddings import embed_dns, normalize
from .projection import AdamState, ProjectionParams, adam_step, forward

logger = logging.getLogger(__name__)

FEATURE_SOURCES = ("proj", "enc", "both")


@dataclass
class ClassifierConfig:
    hidden: int = 64
    lr: float = 1e-3
    max_epochs: int = 500
    patience: int = 20
    min_delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("hidden, max_epochs, patience must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class ClassifierParams:
    W1: np.ndarray  # (hidden, d_in)
    b1: np.ndarray
    W2: np.ndarray  # (n_classes, hidden)
    b2: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[0]

    def to_dict(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierParams":
        return cls(**{k: np.asarray(d[k], dtype=np.float64) for k in ("W1", "b1", "W2", "b2")})


def make_features(dns, source: str, proj_params: ProjectionParams | None, provider,
                  joiner: str = "\n") -> np.ndarray:
    """Feature vector for one day: projection, encoder embedding, or both
    (each part unit-normalized) concatenated."""
    if source not in FEATURE_SOURCES:
        raise ValueError(f"unknown feature source {source!r}")
    e = embed_dns(dns, provider, joiner=joiner)
    if source == "enc":
        return e
    if proj_params is None:
        raise ValueError(f"feature source {source!r} needs projection parameters")
    p, _ = forward(proj_params, e)
    if source == "proj":
        return p
    return np.concatenate([normalize(p), normalize(e)])


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def predict_logits(params: ClassifierParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != params.input_dim:
        raise ValueError(f"feature dim {X.shape[1]} != classifier input dim {params.input_dim}")
    H = np.maximum(X @ params.W1.T + params.b1, 0.0)
    return H @ params.W2.T + params.b2


def predict(params: ClassifierParams, X: np.ndarray) -> np.ndarray:
    return np.argmax(predict_logits(params, X), axis=1)


def _ce_loss_and_grads(params: ClassifierParams, X, y):
    n = len(X)
    H_pre = X @ params.W1.T + params.b1
    H = np.maximum(H_pre, 0.0)
    logits = H @ params.W2.T + params.b2
    probs = softmax(logits)
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    g_logits = probs.copy()
    g_logits[np.arange(n), y] -= 1.0
    g_logits /= n
    g_W2 = g_logits.T @ H
    g_b2 = g_logits.sum(axis=0)
    G_h = (g_logits @ params.W2) * (H_pre > 0.0)
    g_W1 = G_h.T @ X
    g_b1 = G_h.sum(axis=0)
    return loss, {"W1": g_W1, "b1": g_b1, "W2": g_W2, "b2": g_b2}


def cross_entropy(params: ClassifierParams, X, y) -> float:
    probs = softmax(predict_logits(params, X))
    return float(-np.mean(np.log(probs[np.arange(len(X)), y] + 1e-300)))


def train_classifier(X, y, config: ClassifierConfig, X_valid=None, y_valid=None,
                     n_classes: int | None = None) -> ClassifierParams:
    """Fit the softmax head with full-batch Adam.

    Early stopping watches validation cross-entropy when a validation set is
    given (training loss otherwise), restoring the best parameters seen.
    Deterministic under config.seed. A single-class training set is allowed
    but warned about: it yields a constant classifier.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y) or len(X) == 0:
        raise ValueError("features and labels must be non-empty and aligned")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if len(np.unique(y)) < 2:
        warnings.warn("single-class training set: classifier degenerates to a constant",
                      stacklevel=2)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    d_in = X.shape[1]
    param_dict = {
        "W1": rng.standard_normal((config.hidden, d_in)) * math.sqrt(2.0 / d_in),
        "b1": np.zeros(config.hidden),
        "W2": rng.standard_normal((n_classes, config.hidden)) * math.sqrt(2.0 / config.hidden),
        "b2": np.zeros(n_classes),
    }
    state = AdamState.init(param_dict)
    use_valid = X_valid is not None and y_valid is not None
    if use_valid:
        X_valid = np.asarray(X_valid, dtype=np.float64)
        y_valid = np.asarray(y_valid, dtype=np.int64)

    best_loss = math.inf
    best_params = dict(param_dict)
    stale = 0
    for epoch in range(config.max_epochs):
        params = ClassifierParams.from_dict(param_dict)
        loss, grads = _ce_loss_and_grads(params, X, y)
        if not math.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        param_dict, state = adam_step(param_dict, grads, state, config.lr)
        watch = cross_entropy(ClassifierParams.from_dict(param_dict), X_valid, y_valid) if use_valid \
            else loss
        if watch < best_loss - config.min_delta:
            best_loss = watch
            best_params = dict(param_dict)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("early stop at epoch %d (best watched loss %.6f)", epoch, best_loss)
                break
    return ClassifierParams.from_dict(best_params)


@dataclass
class EvalResult:
    accuracy: float
    macro_f1: float
    confusion: np.ndarray  # (C, C), rows = true, cols = predicted

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
        }


def evaluate_predictions(y_true, y_pred, n_classes: int) -> EvalResult:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) == 0:
        raise ValueError("empty evaluation set")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    f1s = []
    for c in range(n_classes):
        tp = confusion[c, c]
        precision = tp / confusion[:, c].sum() if confusion[:, c].sum() else 0.0
        recall = tp / confusion[c, :].sum() if confusion[c, :].sum() else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return EvalResult(accuracy=accuracy, macro_f1=float(np.mean(f1s)), confusion=confusion)


def evaluate(params: ClassifierParams, X, y) -> EvalResult:
    """Accuracy, macro-averaged F1, and the confusion matrix on a test set."""
    return evaluate_predictions(np.asarray(y, dtype=np.int64), predict(params, np.asarray(X)),
                                params.n_classes)


def uniform_baseline(y, n_classes: int, seed: int = 0) -> EvalResult:
    """Chance-level reference: uniform random predictions with a fixed seed."""
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.Generator(np.random.PCG64(seed))
    y_pred = rng.integers(0, n_classes, size=len(y))
    return evaluate_predictions(y, y_pred, n_classes)


def balanced_subsample(y, rng: np.random.Generator) -> np.ndarray:
    """Indices of a class-balanced subset: every present class downsampled to
    the smallest class count, order shuffled by the given generator."""
    y = np.asarray(y, dtype=np.int64)
    classes, counts = np.unique(y, return_counts=True)
    m = counts.min()
    picked = []
    for c in classes:
        idx = np.nonzero(y == c)[0]
        picked.append(rng.permutation(idx)[:m])
    out = np.concatenate(picked)
    return rng.permutation(out)

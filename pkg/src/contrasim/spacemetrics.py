"""Information-density auditing of a labeled embedding set.

Four neighborhood metrics quantify how strongly an embedding space clusters
points of the same label: a purity score from the entropy of k-neighbor label
distributions, plain k-neighbor label agreement, and the KL / Jensen-Shannon
divergences between each point's local label distribution and the global one.
Each metric comes with a shuffled-label baseline (labels permuted, marginal
counts preserved) to show what "no structure" looks like on the same points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .embeddings import embed_text


def encode_labels(labels) -> tuple[np.ndarray, list]:
    """Map arbitrary hashable labels to contiguous ints; returns (codes, classes)."""
    classes = sorted(set(labels), key=repr)
    lookup = {c: i for i, c in enumerate(classes)}
    return np.asarray([lookup[x] for x in labels], dtype=np.int64), classes


def knn_indices(vectors: np.ndarray, k: int) -> np.ndarray:
    """Exact k-nearest-neighbor indices per point, self excluded.

    Euclidean distance; exact ties are broken by ascending point index.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    n = len(vectors)
    if n < 2:
        raise ValueError("need at least 2 points")
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n_points, got k={k}, n={n}")
    diffs = vectors[:, None, :] - vectors[None, :, :]
    sq = np.sum(diffs * diffs, axis=-1)
    np.fill_diagonal(sq, np.inf)
    order = np.argsort(sq, axis=1, kind="stable")
    return order[:, :k]


def _neighbor_label_counts(label_codes: np.ndarray, neigh: np.ndarray, n_classes: int) -> np.ndarray:
    """(n, C) matrix of label counts among each point's neighbors."""
    n, k = neigh.shape
    counts = np.zeros((n, n_classes))
    neigh_labels = label_codes[neigh]
    for c in range(n_classes):
        counts[:, c] = np.sum(neigh_labels == c, axis=1)
    return counts


# Metric cores operate on precomputed neighbor lists so the shuffled baseline
# can re-score permuted labels without redoing the neighbor search.

def g_knn_core(label_codes: np.ndarray, neigh: np.ndarray, n_classes: int) -> float:
    if n_classes < 2:
        return 1.0
    counts = _neighbor_label_counts(label_codes, neigh, n_classes)
    probs = counts / neigh.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    entropy = -terms.sum(axis=1)
    return float(np.mean(1.0 - entropy / math.log(n_classes)))


def knn_accuracy_core(label_codes: np.ndarray, neigh: np.ndarray, n_classes: int) -> float:
    agree = label_codes[neigh] == label_codes[:, None]
    return float(np.mean(agree))


def kl_core(label_codes: np.ndarray, neigh: np.ndarray, n_classes: int,
            smoothing: float = 1e-9) -> float:
    n, k = neigh.shape
    local = _neighbor_label_counts(label_codes, neigh, n_classes) / k
    global_p = np.bincount(label_codes, minlength=n_classes) / n
    local = (local + smoothing) / (1.0 + n_classes * smoothing)
    global_p = (global_p + smoothing) / (1.0 + n_classes * smoothing)
    kl_per_point = np.sum(local * np.log(local / global_p), axis=1)
    return float(np.mean(kl_per_point))


def jsd_core(label_codes: np.ndarray, neigh: np.ndarray, n_classes: int) -> float:
    n, k = neigh.shape
    local = _neighbor_label_counts(label_codes, neigh, n_classes) / k
    global_p = np.bincount(label_codes, minlength=n_classes) / n
    mid = 0.5 * (local + global_p)

    def _kl2(p, m):
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0.0, p * np.log2(p / m), 0.0)
        return terms.sum(axis=1)

    jsd_per_point = 0.5 * _kl2(local, mid) + 0.5 * _kl2(np.broadcast_to(global_p, local.shape), mid)
    return float(np.mean(jsd_per_point))


METRIC_CORES = {
    "g_knn": g_knn_core,
    "knn_accuracy": knn_accuracy_core,
    "kl": kl_core,
    "jsd": jsd_core,
}


def _run_metric(core, vectors, labels, k):
    codes, classes = encode_labels(labels)
    neigh = knn_indices(vectors, k)
    return core(codes, neigh, len(classes))


def g_knn(vectors, labels, k: int = 5) -> float:
    """Neighborhood label purity in [0, 1]: 1 - normalized entropy of the
    k-neighbor label distribution, averaged over points. One global class
    makes it 1 by definition."""
    return _run_metric(g_knn_core, vectors, labels, k)


def mean_neighborhood_entropy(vectors, labels, k: int = 5) -> float:
    """Raw mean Shannon entropy (nats) of k-neighbor label distributions."""
    codes, classes = encode_labels(labels)
    neigh = knn_indices(vectors, k)
    counts = _neighbor_label_counts(codes, neigh, len(classes))
    probs = counts / k
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    return float(np.mean(-terms.sum(axis=1)))


def knn_accuracy(vectors, labels, k: int = 5) -> float:
    """Mean fraction of each point's k neighbors sharing its label; k=1 is
    plain nearest-neighbor label agreement."""
    return _run_metric(knn_accuracy_core, vectors, labels, k)


def kl_local_global(vectors, labels, k: int = 5, smoothing: float = 1e-9) -> float:
    """Mean KL(local label distribution || global), natural log, both
    distributions additively smoothed then renormalized."""
    codes, classes = encode_labels(labels)
    neigh = knn_indices(vectors, k)
    return kl_core(codes, neigh, len(classes), smoothing=smoothing)


def jsd_local_global(vectors, labels, k: int = 5) -> float:
    """Mean Jensen-Shannon divergence (log base 2, so in [0, 1]) between
    local and global label distributions."""
    return _run_metric(jsd_core, vectors, labels, k)


def shuffled_baseline(vectors, labels, metric: str, k: int = 5,
                      repeats: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Metric mean and std under uniformly random label permutations.

    Marginal label counts are preserved exactly (it is a permutation); the
    neighbor structure is computed once and re-scored per repeat.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    core = METRIC_CORES[metric]
    codes, classes = encode_labels(labels)
    neigh = knn_indices(vectors, k)
    rng = np.random.Generator(np.random.PCG64(seed))
    values = np.empty(repeats)
    for r in range(repeats):
        values[r] = core(rng.permutation(codes), neigh, len(classes))
    return float(values.mean()), float(values.std())


@dataclass
class SpaceReport:
    """All four metric values with their shuffled baselines."""

    g_knn: float
    knn_accuracy: float
    kl: float
    jsd: float
    k: int
    n_points: int
    n_classes: int
    baseline_repeats: int
    baselines: dict  # metric name -> {"mean": float, "std": float}

    def to_dict(self) -> dict:
        return {
            "metrics": {
                "g_knn": self.g_knn,
                "knn_accuracy": self.knn_accuracy,
                "kl": self.kl,
                "jsd": self.jsd,
            },
            "baselines": self.baselines,
            "k": self.k,
            "n_points": self.n_points,
            "n_classes": self.n_classes,
            "baseline_repeats": self.baseline_repeats,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        header = (
            f"embedding-space audit: {self.n_points} points, {self.n_classes} classes, "
            f"k={self.k}, baseline={self.baseline_repeats} shuffles"
        )
        rows = [header, "", f"{'metric':<14}{'value':>10}{'baseline':>12}{'std':>10}"]
        values = {"g_knn": self.g_knn, "knn_accuracy": self.knn_accuracy,
                  "kl": self.kl, "jsd": self.jsd}
        for name in ("g_knn", "knn_accuracy", "kl", "jsd"):
            base = self.baselines[name]
            rows.append(f"{name:<14}{values[name]:>10.4f}{base['mean']:>12.4f}{base['std']:>10.4f}")
        return "\n".join(rows) + "\n"


def audit_space(vectors, labels, k: int = 5, baseline_repeats: int = 1000,
                seed: int = 0) -> SpaceReport:
    """Compute all four metrics plus shuffled baselines on one labeled set."""
    vectors = np.asarray(vectors, dtype=np.float64)
    codes, classes = encode_labels(labels)
    neigh = knn_indices(vectors, k)
    n_classes = len(classes)
    baselines = {}
    rng = np.random.Generator(np.random.PCG64(seed))
    for name, core in METRIC_CORES.items():
        values = np.empty(baseline_repeats)
        for r in range(baseline_repeats):
            values[r] = core(rng.permutation(codes), neigh, n_classes)
        baselines[name] = {"mean": float(values.mean()), "std": float(values.std())}
    return SpaceReport(
        g_knn=g_knn_core(codes, neigh, n_classes),
        knn_accuracy=knn_accuracy_core(codes, neigh, n_classes),
        kl=kl_core(codes, neigh, n_classes),
        jsd=jsd_core(codes, neigh, n_classes),
        k=k,
        n_points=len(vectors),
        n_classes=n_classes,
        baseline_repeats=baseline_repeats,
        baselines=baselines,
    )


def action_shift_analysis(pairs, embedder) -> dict:
    """Embedding shift per augmentation action.

    Each pair is (base_text, augmented_text, action_tag, control_text); the
    shift is cos(base, augmented) - cos(base, control), i.e. how much closer
    the augmentation sits to the base than an unrelated control headline does.
    Returns {action: {"mean_shift": float, "count": int}}.
    """
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for base_text, aug_text, action, control_text in pairs:
        b = embed_text(base_text, embedder)
        a = embed_text(aug_text, embedder)
        c = embed_text(control_text, embedder)
        shift = float(b @ a) - float(b @ c)
        key = getattr(action, "value", action)
        sums[key] = sums.get(key, 0.0) + shift
        counts[key] = counts.get(key, 0) + 1
    return {
        action: {"mean_shift": sums[action] / counts[action], "count": counts[action]}
        for action in sorted(sums)
    }

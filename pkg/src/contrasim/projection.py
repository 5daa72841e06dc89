"""Projection network and weighted contrastive training.

A single-hidden-layer ReLU MLP maps encoder embeddings onto a unit sphere.
It is trained against anchor/augmentation pairs weighted by continuous
similarity scores, under one of two losses:

* pull/push: s * d^2 + (1 - s) * max(0, margin - d)^2 summed over pairs,
  where d is the Euclidean distance between projections;
* weighted softmax: -s * log softmax(-d / tau) over each anchor's own
  augmentations.

Everything here is plain float64 numpy with hand-derived gradients, including
the Jacobian of the output normalization, so training is exactly reproducible
and checkable against finite differences.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class ProjectionParams:
    """Weights of the two-layer projection MLP."""

    W1: np.ndarray  # (hidden, d_in)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (d_out, hidden)
    b2: np.ndarray  # (d_out,)

    def __post_init__(self):
        hidden, d_in = self.W1.shape
        d_out = self.W2.shape[0]
        if self.b1.shape != (hidden,) or self.W2.shape != (d_out, hidden) or self.b2.shape != (d_out,):
            raise ValueError("parameter shapes are inconsistent")
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def d_out(self) -> int:
        return self.W2.shape[0]

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "ProjectionParams":
        return cls(**{name: np.asarray(d[name], dtype=np.float64) for name in PARAM_NAMES})

    def copy(self) -> "ProjectionParams":
        return ProjectionParams(**{name: getattr(self, name).copy() for name in PARAM_NAMES})


def init_params(d_in: int, hidden: int, d_out: int, rng: np.random.Generator) -> ProjectionParams:
    """He-normal weights, zero biases; b2 gets tiny noise so the output never
    sits exactly at the normalization singularity when every ReLU is dead."""
    W1 = rng.standard_normal((hidden, d_in)) * math.sqrt(2.0 / d_in)
    W2 = rng.standard_normal((d_out, hidden)) * math.sqrt(2.0 / hidden)
    b1 = np.zeros(hidden)
    b2 = rng.standard_normal(d_out) * 1e-3
    return ProjectionParams(W1=W1, b1=b1, W2=W2, b2=b2)


def forward(params: ProjectionParams, x):
    """Project inputs onto the unit sphere: relu(W1 x + b1) -> W2 h + b2 -> z/|z|.

    Accepts a single vector or a (batch, d_in) matrix; returns the projection
    and a cache for `backward`. Raises if any pre-normalization output has
    near-zero norm.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != params.d_in:
        raise ValueError(f"input dim {X.shape[1]} != network input dim {params.d_in}")
    A = X @ params.W1.T + params.b1
    H = np.maximum(A, 0.0)
    Z = H @ params.W2.T + params.b2
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms < 1e-12):
        raise FloatingPointError("projection norm underflow before normalization")
    P = Z / norms[:, None]
    cache = {"X": X, "A": A, "H": H, "P": P, "norms": norms, "single": single,
             "W1": params.W1, "W2": params.W2}
    return (P[0] if single else P), cache


def backward(cache: dict, g_p):
    """Gradients of a scalar loss through `forward`.

    `g_p` is the loss gradient at the normalized outputs. Returns (parameter
    gradient dict, gradient at the inputs). The normalization Jacobian is
    (I - p p^T) / |z| applied row-wise.
    """
    g_p = np.asarray(g_p, dtype=np.float64)
    G_p = g_p[None, :] if cache["single"] else g_p
    X, A, H, P, norms = cache["X"], cache["A"], cache["H"], cache["P"], cache["norms"]
    if G_p.shape != P.shape:
        raise ValueError(f"upstream gradient shape {G_p.shape} != output shape {P.shape}")

    G_z = (G_p - np.sum(G_p * P, axis=1, keepdims=True) * P) / norms[:, None]
    g_W2 = G_z.T @ H
    g_b2 = G_z.sum(axis=0)
    G_h = G_z @ cache["W2"]
    G_a = G_h * (A > 0.0)
    g_W1 = G_a.T @ X
    g_b1 = G_a.sum(axis=0)
    G_x = G_a @ cache["W1"]
    grads = {"W1": g_W1, "b1": g_b1, "W2": g_W2, "b2": g_b2}
    return grads, (G_x[0] if cache["single"] else G_x)


@dataclass
class TrainBatch:
    """Anchors with their augmentations, flattened.

    `anchors` is (N, d); `augmentations` is (M, d) with `anchor_index[m]`
    naming the anchor each row belongs to, and `weights[m]` its similarity in
    [0, 1]. Every anchor must own at least one augmentation.
    """

    anchors: np.ndarray
    augmentations: np.ndarray
    anchor_index: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=np.float64)
        self.augmentations = np.asarray(self.augmentations, dtype=np.float64)
        self.anchor_index = np.asarray(self.anchor_index, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n, m = len(self.anchors), len(self.augmentations)
        if m == 0 or n == 0:
            raise ValueError("batch needs at least one anchor and one augmentation")
        if self.anchor_index.shape != (m,) or self.weights.shape != (m,):
            raise ValueError("anchor_index/weights must have one entry per augmentation")
        if np.any((self.weights < 0) | (self.weights > 1)):
            raise ValueError("weights must lie in [0, 1]")
        present = np.unique(self.anchor_index)
        if present.min() < 0 or present.max() >= n or len(present) != n:
            raise ValueError("every anchor needs at least one augmentation")

    @property
    def n_pairs(self) -> int:
        return len(self.augmentations)


def loss_wscl(p: np.ndarray, q: np.ndarray, anchor_index: np.ndarray,
              weights: np.ndarray, margin: float):
    """Pull/push loss over projections and its gradients.

    Per pair: s * d^2 + (1 - s) * max(0, margin - d)^2, averaged over pairs.
    Subgradient 0 is used at d = 0 and at the hinge kink d = margin.
    Returns (loss, grad wrt p, grad wrt q).
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    diff = p[anchor_index] - q
    d = np.linalg.norm(diff, axis=1)
    hinge = np.maximum(0.0, margin - d)
    n_pairs = len(q)
    loss = float(np.sum(weights * d**2 + (1.0 - weights) * hinge**2) / n_pairs)

    safe_d = np.where(d > 0.0, d, 1.0)
    factor = 2.0 * weights - 2.0 * (1.0 - weights) * hinge / safe_d
    factor = np.where(d > 0.0, factor, 2.0 * weights)  # pull grad vanishes at d=0 anyway
    g_pairs = (factor / n_pairs)[:, None] * diff
    g_p = np.zeros_like(p)
    np.add.at(g_p, anchor_index, g_pairs)
    return loss, g_p, -g_pairs


def loss_cwcl(p: np.ndarray, q: np.ndarray, anchor_index: np.ndarray,
              weights: np.ndarray, tau: float, distance: str = "euclidean"):
    """Weighted softmax loss over each anchor's augmentations and its gradients.

    Per anchor i: -sum_j s_ij * log softmax_j(-d_ij / tau), with the softmax
    over that anchor's own augmentations, computed max-shifted. `distance` is
    Euclidean by default; "neg_cosine" uses d = -(p . q), the monotone
    cosine equivalent on unit vectors. Returns (loss, grad p, grad q).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if distance not in ("euclidean", "neg_cosine"):
        raise ValueError(f"unknown cwcl distance {distance!r}")
    pa = p[anchor_index]
    if distance == "euclidean":
        diff = pa - q
        d = np.linalg.norm(diff, axis=1)
    else:
        d = -np.sum(pa * q, axis=1)

    n_pairs = len(q)
    z = -d / tau
    loss = 0.0
    g_d = np.zeros(n_pairs)
    for i in np.unique(anchor_index):
        idx = np.nonzero(anchor_index == i)[0]
        zi = z[idx]
        m = zi.max()
        lse = m + math.log(np.sum(np.exp(zi - m)))
        log_sigma = zi - lse
        si = weights[idx]
        loss -= float(np.sum(si * log_sigma))
        sigma = np.exp(log_sigma)
        # dL/dz_k = -s_k + (sum_j s_j) sigma_k ; z = -d / tau
        g_d[idx] = (si - si.sum() * sigma) / tau
    loss /= n_pairs
    g_d /= n_pairs

    if distance == "euclidean":
        safe_d = np.where(d > 0.0, d, 1.0)
        unit = np.where((d > 0.0)[:, None], diff / safe_d[:, None], 0.0)
        g_pairs_p = g_d[:, None] * unit
        g_q = -g_pairs_p
    else:
        g_pairs_p = g_d[:, None] * (-q)
        g_q = g_d[:, None] * (-pa)
    g_p = np.zeros_like(p)
    np.add.at(g_p, anchor_index, g_pairs_p)
    return loss, g_p, g_q


def clip_gradients(grads: dict, clip_norm: float = 1.0) -> dict:
    """Scale the whole gradient so its global L2 norm is at most clip_norm."""
    if clip_norm <= 0:
        raise ValueError("clip_norm must be positive")
    total = math.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
    if total <= clip_norm:
        return grads
    scale = clip_norm / total
    return {name: g * scale for name, g in grads.items()}


def cosine_lr(t: int, total: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Half-cosine decay from lr_max at t=0 to lr_min at t=total."""
    if total < 1:
        raise ValueError("total steps must be >= 1")
    if not 0 <= t <= total:
        raise ValueError(f"step {t} outside [0, {total}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t / total))


@dataclass
class AdamState:
    """First/second moment accumulators keyed like the parameter dict."""

    m: dict
    v: dict
    t: int = 0

    @classmethod
    def init(cls, params: dict) -> "AdamState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.items()},
            v={name: np.zeros_like(arr) for name, arr in params.items()},
            t=0,
        )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
    """One bias-corrected Adam update. Returns (new params, new state).

    Raises on non-finite gradients instead of corrupting the moments.
    """
    b1, b2 = betas
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in {name}; aborting step")
    t = state.t + 1
    new_params, new_m, new_v = {}, {}, {}
    for name in params:
        g = grads[name]
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g**2
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


@dataclass
class TrainConfig:
    lr: float = 0.001
    betas: tuple[float, float] = (0.9, 0.999)
    epochs: int = 50
    batch_anchors: int = 2
    margin: float = 1.0
    temperature: float = 0.1
    clip_norm: float = 1.0
    loss: str = "wscl"
    cwcl_distance: str = "euclidean"
    hidden: int = 256
    proj_dim: int = 128
    lr_min: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 < self.betas[0] < 1 and 0 < self.betas[1] < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.margin <= 0 or self.temperature <= 0 or self.clip_norm <= 0:
            raise ValueError("margin, temperature, clip_norm must be positive")
        if self.loss not in ("wscl", "cwcl"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.cwcl_distance not in ("euclidean", "neg_cosine"):
            raise ValueError(f"unknown cwcl distance {self.cwcl_distance!r}")
        if self.epochs < 1 or self.batch_anchors < 1:
            raise ValueError("epochs and batch_anchors must be >= 1")


def batch_gradients(params: ProjectionParams, batch: TrainBatch, config: TrainConfig):
    """Loss and full parameter gradient for one batch.

    Anchors and augmentations go through the same network; their projection
    gradients are backpropagated in one concatenated pass.
    """
    n = len(batch.anchors)
    stacked = np.concatenate([batch.anchors, batch.augmentations], axis=0)
    proj, cache = forward(params, stacked)
    p, q = proj[:n], proj[n:]
    if config.loss == "wscl":
        loss, g_p, g_q = loss_wscl(p, q, batch.anchor_index, batch.weights, config.margin)
    else:
        loss, g_p, g_q = loss_cwcl(p, q, batch.anchor_index, batch.weights,
                                   config.temperature, config.cwcl_distance)
    grads, _ = backward(cache, np.concatenate([g_p, g_q], axis=0))
    return loss, grads


@dataclass
class AnchorData:
    """One training anchor: its embedding and weighted augmentation embeddings."""

    anchor: np.ndarray
    augmentations: np.ndarray  # (M_i, d)
    weights: np.ndarray  # (M_i,)


def make_batch(entries: list[AnchorData]) -> TrainBatch:
    anchors = np.stack([e.anchor for e in entries])
    augs = np.concatenate([e.augmentations for e in entries], axis=0)
    idx = np.concatenate([np.full(len(e.augmentations), i) for i, e in enumerate(entries)])
    w = np.concatenate([e.weights for e in entries])
    return TrainBatch(anchors=anchors, augmentations=augs, anchor_index=idx, weights=w)


def train(
    data: list[AnchorData],
    config: TrainConfig,
    params: ProjectionParams | None = None,
    checkpoint_dir=None,
):
    """Optimize the projection network.

    Epochs iterate seeded shuffles of the anchors in groups of
    `batch_anchors`, each step doing forward / loss / backward / global-norm
    clip / Adam with a cosine-annealed learning rate over the whole run.
    Returns (params, log rows); rows carry (epoch, step, lr, loss). Fully
    deterministic given (data, config).
    """
    if not data:
        raise ValueError("no training anchors")
    for e in data:
        if len(e.augmentations) == 0:
            raise ValueError("anchor without augmentations")
    rng = np.random.Generator(np.random.PCG64(config.seed))
    if params is None:
        params = init_params(data[0].anchor.shape[0], config.hidden, config.proj_dim, rng)
    param_dict = params.to_dict()
    state = AdamState.init(param_dict)

    steps_per_epoch = math.ceil(len(data) / config.batch_anchors)
    total_steps = config.epochs * steps_per_epoch
    log_rows = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        epoch_losses = []
        for start in range(0, len(data), config.batch_anchors):
            entries = [data[i] for i in order[start:start + config.batch_anchors]]
            batch = make_batch(entries)
            lr = cosine_lr(step, total_steps, config.lr, config.lr_min)
            loss, grads = batch_gradients(ProjectionParams.from_dict(param_dict), batch, config)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch} step {step}")
            grads = clip_gradients(grads, config.clip_norm)
            param_dict, state = adam_step(param_dict, grads, state, lr, config.betas)
            log_rows.append({"epoch": epoch, "step": step, "lr": lr, "loss": loss})
            epoch_losses.append(loss)
            step += 1
        logger.info("epoch %d mean loss %.6f", epoch, float(np.mean(epoch_losses)))
        if checkpoint_dir is not None:
            save_checkpoint(
                Path(checkpoint_dir) / f"checkpoint_epoch{epoch:04d}.json",
                ProjectionParams.from_dict(param_dict), config, epoch=epoch, opt_state=state,
            )
    return ProjectionParams.from_dict(param_dict), log_rows


CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ProjectionParams, config: TrainConfig,
                    epoch: int | None = None, opt_state: AdamState | None = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "shapes": {name: list(getattr(params, name).shape) for name in PARAM_NAMES},
        "params": {name: getattr(params, name).tolist() for name in PARAM_NAMES},
        "config": {
            "lr": config.lr, "betas": list(config.betas), "epochs": config.epochs,
            "batch_anchors": config.batch_anchors, "margin": config.margin,
            "temperature": config.temperature, "clip_norm": config.clip_norm,
            "loss": config.loss, "cwcl_distance": config.cwcl_distance,
            "hidden": config.hidden, "proj_dim": config.proj_dim,
            "lr_min": config.lr_min, "seed": config.seed,
        },
        "epoch": epoch,
    }
    if opt_state is not None:
        payload["opt_state"] = {
            "t": opt_state.t,
            "m": {k: v.tolist() for k, v in opt_state.m.items()},
            "v": {k: v.tolist() for k, v in opt_state.v.items()},
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path):
    """Returns (params, config, epoch). Rejects unknown versions."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    params = ProjectionParams.from_dict(payload["params"])
    for name in PARAM_NAMES:
        if list(getattr(params, name).shape) != payload["shapes"][name]:
            raise ValueError(f"checkpoint shape mismatch for {name}")
    cfg = payload["config"]
    config = TrainConfig(
        lr=cfg["lr"], betas=tuple(cfg["betas"]), epochs=cfg["epochs"],
        batch_anchors=cfg["batch_anchors"], margin=cfg["margin"],
        temperature=cfg["temperature"], clip_norm=cfg["clip_norm"], loss=cfg["loss"],
        cwcl_distance=cfg["cwcl_distance"], hidden=cfg["hidden"],
        proj_dim=cfg["proj_dim"], lr_min=cfg["lr_min"], seed=cfg["seed"],
    )
    return params, config, payload.get("epoch")


def save_training_log(rows: list[dict], path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "step", "lr", "loss"])
        writer.writeheader()
        writer.writerows(rows)

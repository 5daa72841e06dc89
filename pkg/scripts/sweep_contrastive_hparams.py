#!/usr/bin/env python3
"""Sweep the contrastive margin and softmax temperature on a synthetic
3-topic corpus, reporting held-out space metrics per setting.

The corpus mirrors the acceptance construction: topic signal in a small
subspace plus nuisance dimensions; augmentation similarity scores come from
the real action sampler and scorer.
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from contrasim.augment import DEFAULT_DISTRIBUTION, sample_action, sample_length
from contrasim.embeddings import normalize
from contrasim.projection import AnchorData, TrainConfig, forward, init_params, train
from contrasim.simscore import Action, score_actions
from contrasim.spacemetrics import g_knn, kl_local_global, knn_accuracy


def topic_corpus(seed, d_e=48, alpha=0.55, sig_day=0.14, sig_slot=0.06,
                 n_train_per=40, n_held_per=8, m_aug=12):
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = []
    for c in range(3):
        v = np.zeros(d_e)
        v[c] = alpha
        centers.append(v)

    def sample_point(center, sigma):
        return normalize(center + sigma * rng.standard_normal(d_e))

    def slot_content(action, c):
        other = (c + 1 + int(rng.integers(0, 2))) % 3
        if action is Action.REWORD:
            return sample_point(centers[c], sig_slot)
        if action is Action.SHIFT:
            return sample_point(0.5 * (centers[c] + centers[other]), sig_slot)
        return sample_point(centers[other], sig_slot)

    data = []
    for c in range(3):
        for _ in range(n_train_per):
            anchor = sample_point(centers[c], sig_day)
            augs, weights = [], []
            for _ in range(m_aug):
                n = sample_length([3, 4, 5, 6], rng)
                actions = [sample_action(DEFAULT_DISTRIBUTION, rng) for _ in range(n)]
                augs.append(normalize(np.mean([slot_content(a, c) for a in actions], axis=0)))
                weights.append(score_actions(actions))
            data.append(AnchorData(anchor=anchor, augmentations=np.stack(augs),
                                   weights=np.asarray(weights)))
    held, labels = [], []
    for c in range(3):
        for _ in range(n_held_per):
            held.append(sample_point(centers[c], sig_day))
            labels.append(c)
    return data, np.stack(held), labels


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--margins", type=float, nargs="+", default=[0.5, 1.0, 1.5, 2.0])
    parser.add_argument("--temperatures", type=float, nargs="+", default=[0.05, 0.1, 0.25, 0.5])
    parser.add_argument("--out", default="sweep_results.json")
    args = parser.parse_args()

    results = []

    def evaluate(params, held, labels):
        proj, _ = forward(params, held)
        return {
            "g_knn": g_knn(proj, labels, k=5),
            "knn_accuracy": knn_accuracy(proj, labels, k=5),
            "kl": kl_local_global(proj, labels, k=5),
        }

    def sweep(loss, key, values):
        for value in values:
            per_seed = []
            for seed in range(args.seeds):
                data, held, labels = topic_corpus(seed)
                kwargs = {key: value}
                cfg = TrainConfig(epochs=args.epochs, batch_anchors=2, hidden=32,
                                  proj_dim=8, seed=seed, loss=loss, **kwargs)
                params0 = init_params(held.shape[1], cfg.hidden, cfg.proj_dim,
                                      np.random.Generator(np.random.PCG64(seed)))
                trained, _ = train(data, cfg, params=params0)
                per_seed.append(evaluate(trained, held, labels))
            agg = {m: float(np.mean([r[m] for r in per_seed])) for m in per_seed[0]}
            results.append({"loss": loss, key: value, **agg})
            print(f"{loss} {key}={value}: " +
                  "  ".join(f"{m}={v:.3f}" for m, v in agg.items()))

    sweep("wscl", "margin", args.margins)
    sweep("cwcl", "temperature", args.temperatures)

    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()

"""Command-line pipeline.

Each subcommand runs one reproducible stage, reading its predecessors'
artifacts from the output directory and writing its own next to a manifest
(config echo, seed, input checksums) sufficient to re-run it bit-identically.

    ingest -> augment -> embed -> train-proj -> audit-space
                                     |-> train-heads -> eval-heads
                                     |-> query-similar
    (baseline and shift-analysis are side audits)

Exit codes: 0 ok, 1 runtime error, 2 usage/dependency error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from importlib.resources import files as resource_files
from pathlib import Path

import numpy as np

from . import __version__
from .augment import build_augmented_dataset, load_augmented_dataset
from .config import (
    ConfigError,
    PipelineConfig,
    build_discriminator_provider,
    build_embedding_provider,
    build_generation_provider,
    validate_config,
)
from .corpus import (
    CorpusSplit,
    MarketLabel,
    TfidfModel,
    ingest_dataset,
    relevance_filter,
    save_dataset,
    split_corpus,
    tfidf_prune,
)
from .embeddings import EmbeddingStore, FallbackEmbedder, FileEmbedder, dns_text, embed_text, text_key
from .heads import (
    ClassifierParams,
    balanced_subsample,
    evaluate,
    make_features,
    train_classifier,
    uniform_baseline,
)
from .projection import (
    AnchorData,
    load_checkpoint,
    save_checkpoint,
    save_training_log,
    train,
)
from .retrieval import build_index, load_index, query, save_index
from .spacemetrics import action_shift_analysis, audit_space, shuffled_baseline

logger = logging.getLogger("contrasim")

LABEL_CODES = {MarketLabel.FALL: 0, MarketLabel.NEUTRAL: 1, MarketLabel.RISE: 2}
CODE_LABELS = {v: k.value for k, v in LABEL_CODES.items()}


class UsageError(Exception):
    """Bad invocation or missing predecessor artifact (exit code 2)."""


def bundled_path(name: str) -> Path:
    return Path(str(resource_files("contrasim") / "data" / name))


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(stage_dir: Path, command: str, cfg: PipelineConfig,
                   inputs: list[Path], outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "inputs": {str(p): _sha256_file(p) for p in sorted(inputs)},
        "outputs": sorted(outputs),
    }
    with open(stage_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise UsageError(f"missing artifact {path}; run '{producer}' first")
    return path


def load_split(out: Path) -> CorpusSplit:
    corpus_dir = out / "corpus"
    parts = {}
    for name in ("train", "valid", "test"):
        parts[name] = ingest_dataset(require(corpus_dir / f"{name}.jsonl", "ingest"))
    return CorpusSplit(train=parts["train"], valid=parts["valid"], test=parts["test"])


def _store_provider(out: Path):
    store_path = require(out / "embeddings" / "store.jsonl", "embed")
    return FileEmbedder(EmbeddingStore.load(store_path)), store_path


class PruningEmbedder:
    """Shortens overlong texts before they reach the encoder.

    Texts at or under the word cap pass through untouched, so store keys
    (hashes of the raw text) are unaffected; only what the encoder sees for
    overlong days changes.
    """

    def __init__(self, provider, model: TfidfModel, threshold: float, max_words: int):
        self.provider = provider
        self.model = model
        self.threshold = threshold
        self.max_words = max_words
        self.dim = getattr(provider, "dim", None)

    def embed(self, text: str):
        return self.provider.embed(
            tfidf_prune(text, self.model, self.threshold, self.max_words))


def _pruning_provider(cfg: PipelineConfig, split: CorpusSplit, provider=None):
    provider = provider if provider is not None else build_embedding_provider(cfg)
    model = TfidfModel.fit_days(split.train)
    return PruningEmbedder(provider, model, cfg.tfidf_threshold, cfg.max_words)


def _labeled(days):
    return [d for d in days if d.label is not None]


def _split_days(split: CorpusSplit, which: str):
    return {"train": split.train, "valid": split.valid, "test": split.test}[which]


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def cmd_ingest(cfg: PipelineConfig, out: Path, args) -> None:
    if not cfg.dataset_path:
        raise UsageError("dataset.path is not configured (set it in the config file)")
    dataset_path = Path(cfg.dataset_path)
    if not dataset_path.exists():
        raise UsageError(f"dataset file {dataset_path} does not exist")
    days = ingest_dataset(dataset_path, cfg.dataset_format)
    if cfg.relevance_filter:
        provider = build_embedding_provider(cfg)
        ref_path = Path(cfg.reference_headlines) if cfg.reference_headlines \
            else bundled_path("seed_headlines.txt")
        references = [line.strip() for line in ref_path.read_text(encoding="utf-8").splitlines()
                      if line.strip()]
        refs = [embed_text(t, provider) for t in references]
        filtered_days = []
        for day in days:
            kept = relevance_filter(day.headlines, refs, provider, cfg.relevance_threshold)
            if kept:
                filtered_days.append(
                    type(day)(date=day.date, headlines=tuple(kept),
                              label=day.label, pct_change=day.pct_change))
            else:
                logger.warning("dropping %s: no headline passed the relevance filter", day.date)
        days = filtered_days
    split = split_corpus(days, cfg.fractions, cfg.split_mode, seed=cfg.seed)
    stage = out / "corpus"
    stage.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", split.train), ("valid", split.valid), ("test", split.test)):
        save_dataset(part, stage / f"{name}.jsonl")
    write_manifest(stage, "ingest", cfg, [dataset_path],
                   ["train.jsonl", "valid.jsonl", "test.jsonl"])
    print(f"ingest: {len(split.train)}/{len(split.valid)}/{len(split.test)} "
          f"train/valid/test days -> {stage}")


def cmd_augment(cfg: PipelineConfig, out: Path, args) -> None:
    split = load_split(out)
    gen = build_generation_provider(cfg)
    disc = build_discriminator_provider(cfg)
    stage = out / "augmented"
    stage.mkdir(parents=True, exist_ok=True)
    target = stage / "augmented.jsonl"
    count = build_augmented_dataset(
        split.train, cfg.per_anchor, target, dist=cfg.distribution, gen=gen, disc=disc,
        seed=cfg.seed, bands=cfg.bands, max_retries=cfg.max_retries,
    )
    write_manifest(stage, "augment", cfg, [out / "corpus" / "train.jsonl"], ["augmented.jsonl"])
    print(f"augment: {count} augmented sets ({cfg.per_anchor} per anchor) -> {target}")


def cmd_embed(cfg: PipelineConfig, out: Path, args) -> None:
    split = load_split(out)
    aug_path = require(out / "augmented" / "augmented.jsonl", "augment")
    records = load_augmented_dataset(aug_path)
    texts = [dns_text(day) for day in split.all_days()]
    texts += [dns_text(aug) for aug, _ in records]
    provider = _pruning_provider(cfg, split)
    store = EmbeddingStore(dim=getattr(provider, "dim", None) or cfg.providers.embedding_dim)
    for text in texts:
        key = text_key(text)
        if key not in store:
            store.add(key, embed_text(text, provider))
    stage = out / "embeddings"
    stage.mkdir(parents=True, exist_ok=True)
    store.save(stage / "store.jsonl")
    write_manifest(stage, "embed", cfg,
                   [out / "corpus" / f"{n}.jsonl" for n in ("train", "valid", "test")] + [aug_path],
                   ["store.jsonl"])
    print(f"embed: {len(store)} embeddings (dim {store.dim}) -> {stage / 'store.jsonl'}")


def cmd_train_proj(cfg: PipelineConfig, out: Path, args) -> None:
    split = load_split(out)
    aug_path = require(out / "augmented" / "augmented.jsonl", "augment")
    provider, store_path = _store_provider(out)
    records = load_augmented_dataset(aug_path)
    by_date: dict = {}
    for aug, _ in records:
        by_date.setdefault(aug.base_date, []).append(aug)
    data = []
    for day in split.train:
        augs = by_date.get(day.date, [])
        if not augs:
            logger.warning("train day %s has no augmented sets; skipping", day.date)
            continue
        anchor = provider.embed(dns_text(day))
        data.append(AnchorData(
            anchor=anchor,
            augmentations=np.stack([provider.embed(dns_text(a)) for a in augs]),
            weights=np.asarray([a.s for a in augs]),
        ))
    if not data:
        raise RuntimeError("no training anchors with augmentations")
    stage = out / "projection"
    epochs_dir = stage / "epochs"
    epochs_dir.mkdir(parents=True, exist_ok=True)
    params, log_rows = train(data, cfg.train, checkpoint_dir=epochs_dir)
    save_checkpoint(stage / "checkpoint.json", params, cfg.train,
                    epoch=cfg.train.epochs - 1)
    save_training_log(log_rows, stage / "training_log.csv")
    write_manifest(stage, "train-proj", cfg, [aug_path, store_path],
                   ["checkpoint.json", "training_log.csv"])
    final_loss = log_rows[-1]["loss"] if log_rows else float("nan")
    print(f"train-proj: {cfg.train.epochs} epochs of {cfg.train.loss} on {len(data)} anchors, "
          f"final step loss {final_loss:.6f} -> {stage / 'checkpoint.json'}")


def _audit_points(cfg: PipelineConfig, out: Path):
    split = load_split(out)
    checkpoint = require(out / "projection" / "checkpoint.json", "train-proj")
    provider, store_path = _store_provider(out)
    params, _, _ = load_checkpoint(checkpoint)
    days = _labeled(_split_days(split, cfg.metrics_split))
    if len(days) < 2:
        raise RuntimeError(f"audit needs >= 2 labeled days in the {cfg.metrics_split} split")
    from .projection import forward

    vectors = np.stack([forward(params, provider.embed(dns_text(d)))[0] for d in days])
    labels = [d.label.value for d in days]
    return vectors, labels, [checkpoint, store_path]


def cmd_audit_space(cfg: PipelineConfig, out: Path, args) -> None:
    vectors, labels, inputs = _audit_points(cfg, out)
    if cfg.metrics_k >= len(vectors):
        raise RuntimeError(f"metrics.k={cfg.metrics_k} must be < {len(vectors)} audited points")
    report = audit_space(vectors, labels, k=cfg.metrics_k,
                         baseline_repeats=cfg.baseline_repeats, seed=cfg.seed)
    stage = out / "space"
    stage.mkdir(parents=True, exist_ok=True)
    (stage / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (stage / "report.txt").write_text(report.to_text(), encoding="utf-8")
    write_manifest(stage, "audit-space", cfg, inputs, ["report.json", "report.txt"])
    print(report.to_text())


def cmd_baseline(cfg: PipelineConfig, out: Path, args) -> None:
    vectors, labels, inputs = _audit_points(cfg, out)
    if cfg.metrics_k >= len(vectors):
        raise RuntimeError(f"metrics.k={cfg.metrics_k} must be < {len(vectors)} audited points")
    result = {}
    for metric in ("g_knn", "knn_accuracy", "kl", "jsd"):
        mean, std = shuffled_baseline(vectors, labels, metric, k=cfg.metrics_k,
                                      repeats=cfg.baseline_repeats, seed=cfg.seed)
        result[metric] = {"mean": mean, "std": std}
    payload = {"baselines": result, "repeats": cfg.baseline_repeats,
               "k": cfg.metrics_k, "n_points": len(vectors)}
    stage = out / "baseline"
    stage.mkdir(parents=True, exist_ok=True)
    (stage / "baseline.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    write_manifest(stage, "baseline", cfg, inputs, ["baseline.json"])
    print(f"baseline: {cfg.baseline_repeats} shuffles on {len(vectors)} points "
          f"-> {stage / 'baseline.json'}")


def _head_features(days, source: str, params, provider):
    X = np.stack([make_features(d, source, params, provider) for d in days])
    y = np.asarray([LABEL_CODES[d.label] for d in days], dtype=np.int64)
    return X, y


def cmd_train_heads(cfg: PipelineConfig, out: Path, args) -> None:
    split = load_split(out)
    checkpoint = require(out / "projection" / "checkpoint.json", "train-proj")
    provider, store_path = _store_provider(out)
    params, _, _ = load_checkpoint(checkpoint)
    train_days = _labeled(split.train)
    valid_days = _labeled(split.valid)
    if not train_days:
        raise RuntimeError("no labeled training days")
    stage = out / "heads"
    stage.mkdir(parents=True, exist_ok=True)
    outputs = []
    for source in ("proj", "enc", "both"):
        X, y = _head_features(train_days, source, params, provider)
        if valid_days:
            Xv, yv = _head_features(valid_days, source, params, provider)
        else:
            Xv = yv = None
        clf = train_classifier(X, y, cfg.classifier, Xv, yv, n_classes=len(LABEL_CODES))
        payload = {
            "version": 1,
            "source": source,
            "loss": cfg.train.loss,
            "params": {k: v.tolist() for k, v in clf.to_dict().items()},
        }
        name = f"classifier_{source}.json"
        (stage / name).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
        outputs.append(name)
    write_manifest(stage, "train-heads", cfg, [checkpoint, store_path], outputs)
    print(f"train-heads: trained proj/enc/both heads on {len(train_days)} days -> {stage}")


def _load_head(out: Path, source: str) -> ClassifierParams:
    path = require(out / "heads" / f"classifier_{source}.json", "train-heads")
    payload = json.loads(path.read_text(encoding="utf-8"))
    return ClassifierParams.from_dict(payload["params"])


def cmd_eval_heads(cfg: PipelineConfig, out: Path, args) -> None:
    split = load_split(out)
    checkpoint = require(out / "projection" / "checkpoint.json", "train-proj")
    provider, store_path = _store_provider(out)
    params, _, _ = load_checkpoint(checkpoint)
    test_days = _labeled(split.test)
    if not test_days:
        raise RuntimeError("no labeled test days")
    y_all = np.asarray([LABEL_CODES[d.label] for d in test_days], dtype=np.int64)
    if cfg.balance_eval and len(np.unique(y_all)) > 1:
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        idx = balanced_subsample(y_all, rng)
        test_days = [test_days[i] for i in idx]
    rows = {"baseline": uniform_baseline(
        [LABEL_CODES[d.label] for d in test_days], len(LABEL_CODES), seed=cfg.seed).to_dict()}
    for source in ("proj", "enc", "both"):
        clf = _load_head(out, source)
        X, y = _head_features(test_days, source, params, provider)
        rows[source] = evaluate(clf, X, y).to_dict()
    report = {
        "rows": rows,
        "loss": cfg.train.loss,
        "n_test_days": len(test_days),
        "balanced": bool(cfg.balance_eval),
        "label_codes": {v.value: c for v, c in LABEL_CODES.items()},
    }
    stage = out / "heads_eval"
    stage.mkdir(parents=True, exist_ok=True)
    (stage / "eval_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                            encoding="utf-8")
    write_manifest(stage, "eval-heads", cfg, [checkpoint, store_path], ["eval_report.json"])
    for name in ("baseline", "proj", "enc", "both"):
        r = rows[name]
        print(f"eval-heads: {name:<9} accuracy {r['accuracy']:.4f}  macro-F1 {r['macro_f1']:.4f}")


def cmd_query_similar(cfg: PipelineConfig, out: Path, args) -> None:
    if not args.text and not args.date:
        raise UsageError("query-similar needs --text or --date")
    split = load_split(out)
    checkpoint = require(out / "projection" / "checkpoint.json", "train-proj")
    provider, store_path = _store_provider(out)
    params, _, _ = load_checkpoint(checkpoint)
    stage = out / "retrieval"
    stage.mkdir(parents=True, exist_ok=True)
    index_path = stage / "index.jsonl"
    if index_path.exists():
        index = load_index(index_path)
    else:
        index = build_index(split.all_days(), params, provider)
        save_index(index, index_path)

    query_provider = FallbackEmbedder(provider, _pruning_provider(cfg, split)) \
        if cfg.providers.embedding_mode != "file" else provider
    if args.date:
        matches = [d for d in split.all_days() if d.date.isoformat() == args.date]
        if not matches:
            raise UsageError(f"date {args.date} is not in the ingested corpus")
        query_input = matches[0]
    else:
        query_input = args.text
    k = args.k if args.k else cfg.metrics_k
    hits = query(index, query_input, k, proj_params=params, provider=query_provider)
    payload = [{"date": h.date.isoformat(), "score": h.score, "preview": h.preview} for h in hits]
    (stage / "query_result.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    write_manifest(stage, "query-similar", cfg, [checkpoint, store_path],
                   ["index.jsonl", "query_result.json"])
    print(f"{'rank':<6}{'date':<14}{'score':>10}  preview")
    for rank, h in enumerate(hits, start=1):
        print(f"{rank:<6}{h.date.isoformat():<14}{h.score:>10.4f}  {h.preview[:60]}")


def cmd_shift_analysis(cfg: PipelineConfig, out: Path, args) -> None:
    split = load_split(out)
    aug_path = require(out / "augmented" / "augmented.jsonl", "augment")
    records = load_augmented_dataset(aug_path)
    headline_by_id = {h.id: h for day in split.all_days() for h in day.headlines}
    provider = _pruning_provider(cfg, split)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    all_headlines = [h for day in split.all_days() for h in day.headlines]
    pairs = []
    for aug, _ in records:
        for slot in aug.slots:
            if slot.action.value not in ("Re", "S", "N"):
                continue
            base = headline_by_id.get(slot.source_id)
            if base is None:
                continue
            controls = [h for h in all_headlines if h.date != base.date]
            control = controls[int(rng.integers(0, len(controls)))]
            pairs.append((base.text, slot.text, slot.action.value, control.text))
    if not pairs:
        raise RuntimeError("no generated (reword/shift/negate) slots found to analyse")
    shifts = action_shift_analysis(pairs, provider)
    stage = out / "shift"
    stage.mkdir(parents=True, exist_ok=True)
    (stage / "shift_report.json").write_text(json.dumps(shifts, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
    write_manifest(stage, "shift-analysis", cfg, [aug_path], ["shift_report.json"])
    for action, row in shifts.items():
        print(f"shift-analysis: {action:<3} mean shift {row['mean_shift']:+.4f} "
              f"over {row['count']} pairs")


COMMANDS = {
    "ingest": cmd_ingest,
    "augment": cmd_augment,
    "embed": cmd_embed,
    "train-proj": cmd_train_proj,
    "audit-space": cmd_audit_space,
    "train-heads": cmd_train_heads,
    "eval-heads": cmd_eval_heads,
    "query-similar": cmd_query_similar,
    "baseline": cmd_baseline,
    "shift-analysis": cmd_shift_analysis,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contrasim",
        description="Weighted contrastive similarity pipeline for daily news sets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", help="TOML config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override pipeline seed")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--provider", choices=["mock", "http", "file"],
                       help="override provider mode")
        p.add_argument("--loss", choices=["wscl", "cwcl"], help="override training loss")
        p.add_argument("--k", type=int, help="override neighbor count / result count")
        if name == "query-similar":
            p.add_argument("--date", help="query by an ingested day's date (YYYY-MM-DD)")
            p.add_argument("--text", help="query by raw headline text")
    return parser


def apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
        cfg.classifier.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    if args.loss:
        cfg.train.loss = args.loss
    if args.k is not None:
        if args.k < 1:
            raise UsageError("--k must be >= 1")
        cfg.metrics_k = args.k
    if args.provider:
        cfg.providers.embedding_mode = args.provider
        if args.provider in ("mock", "http"):
            cfg.providers.generation_mode = args.provider
            cfg.providers.discriminator_mode = args.provider
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = validate_config(args.config) if args.config else validate_config({})
        cfg = apply_overrides(cfg, args)
        for note in cfg.notes:
            logger.info("%s", note)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out, args)
        return 0
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure inside a stage
        logger.debug("stage failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

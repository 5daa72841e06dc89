"""Pipeline configuration: one TOML file drives every CLI stage.

Validation fills documented defaults, rejects unknown keys, and reports every
problem at once with its key path. Secrets are never inlined: provider
credentials are named environment variables.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .augment import ActionDistribution, QualityBands
from .heads import ClassifierConfig
from .projection import TrainConfig
from .providers import HttpDiscriminator, HttpGenerator, MockDiscriminator, MockGenerator


class ConfigError(ValueError):
    """Carries every validation problem found, each with its key path."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))


@dataclass
class ProviderSettings:
    generation_mode: str = "mock"
    generation_endpoint: str = ""
    generation_model: str = ""
    generation_api_key_env: str = ""
    generation_temperature: float = 0.7
    generation_prompts: dict = field(default_factory=dict)  # per-action overrides
    discriminator_mode: str = "mock"
    discriminator_endpoint: str = ""
    discriminator_api_key_env: str = ""
    embedding_mode: str = "mock"
    embedding_endpoint: str = ""
    embedding_api_key_env: str = ""
    embedding_dim: int = 64
    embedding_store_path: str = ""
    embedding_seed: int = 0


@dataclass
class PipelineConfig:
    dataset_path: str = ""
    dataset_format: str = "jsonl"
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_mode: str = "chronological"
    relevance_filter: bool = False
    relevance_threshold: float = 0.2
    reference_headlines: str = ""
    tfidf_threshold: float = 0.2
    max_words: int = 3000
    providers: ProviderSettings = field(default_factory=ProviderSettings)
    distribution: ActionDistribution = field(
        default_factory=lambda: ActionDistribution(0.05, 0.025, 0.05, 0.775))
    bands: QualityBands = field(default_factory=QualityBands)
    per_anchor: int = 4
    max_retries: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics_k: int = 5
    baseline_repeats: int = 1000
    metrics_split: str = "test"
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    balance_eval: bool = True
    seed: int = 0
    out_dir: str = "artifacts"
    notes: list[str] = field(default_factory=list)

    def echo(self) -> dict:
        """Flat JSON-safe view of the effective configuration for manifests."""
        return {
            "dataset": {"path": self.dataset_path, "format": self.dataset_format},
            "split": {"fractions": list(self.fractions), "mode": self.split_mode},
            "corpus": {
                "relevance_filter": self.relevance_filter,
                "relevance_threshold": self.relevance_threshold,
                "reference_headlines": self.reference_headlines,
                "tfidf_threshold": self.tfidf_threshold,
                "max_words": self.max_words,
            },
            "providers": vars(self.providers),
            "augment": {
                "per_anchor": self.per_anchor,
                "max_retries": self.max_retries,
                "p_re": self.distribution.p_re,
                "p_s": self.distribution.p_s,
                "p_n": self.distribution.p_n,
                "p_ra": self.distribution.p_ra,
                "band_boundaries": [self.bands.negated[1], self.bands.shifted[1]],
            },
            "train": {
                "lr": self.train.lr, "betas": list(self.train.betas),
                "epochs": self.train.epochs, "batch_anchors": self.train.batch_anchors,
                "margin": self.train.margin, "temperature": self.train.temperature,
                "clip_norm": self.train.clip_norm, "loss": self.train.loss,
                "cwcl_distance": self.train.cwcl_distance, "hidden": self.train.hidden,
                "proj_dim": self.train.proj_dim, "lr_min": self.train.lr_min,
                "seed": self.train.seed,
            },
            "metrics": {"k": self.metrics_k, "baseline_repeats": self.baseline_repeats,
                        "split": self.metrics_split},
            "classifier": {
                "hidden": self.classifier.hidden, "lr": self.classifier.lr,
                "max_epochs": self.classifier.max_epochs, "patience": self.classifier.patience,
                "balance_eval": self.balance_eval,
            },
            "pipeline": {"seed": self.seed, "out_dir": self.out_dir},
        }


# key path -> (expected type(s), default). Tuples of floats accept ints too.
_SCHEMA = {
    "dataset": {"path": (str, ""), "format": (str, "jsonl")},
    "split": {"fractions": (list, [0.8, 0.1, 0.1]), "mode": (str, "chronological")},
    "corpus": {
        "relevance_filter": (bool, False),
        "relevance_threshold": ((int, float), 0.2),
        "reference_headlines": (str, ""),
        "tfidf_threshold": ((int, float), 0.2),
        "max_words": (int, 3000),
    },
    "providers.generation": {
        "mode": (str, "mock"), "endpoint": (str, ""), "model": (str, ""),
        "api_key_env": (str, ""), "temperature": ((int, float), 0.7),
        "prompt_re": (str, ""), "prompt_s": (str, ""), "prompt_n": (str, ""),
    },
    "providers.discriminator": {
        "mode": (str, "mock"), "endpoint": (str, ""), "api_key_env": (str, ""),
    },
    "providers.embedding": {
        "mode": (str, "mock"), "endpoint": (str, ""), "api_key_env": (str, ""),
        "dim": (int, 64), "store_path": (str, ""), "seed": (int, 0),
    },
    "augment": {
        "per_anchor": (int, 4), "max_retries": (int, 3),
        "p_re": ((int, float), 0.05), "p_s": ((int, float), 0.025),
        "p_n": ((int, float), 0.05), "p_ra": ((int, float), 0.775),
        "band_boundaries": (list, [0.33, 0.66]),
    },
    "train": {
        "lr": ((int, float), 0.001), "betas": (list, [0.9, 0.999]), "epochs": (int, 50),
        "batch_anchors": (int, 2), "margin": ((int, float), 1.0),
        "temperature": ((int, float), 0.1), "clip_norm": ((int, float), 1.0),
        "loss": (str, "wscl"), "cwcl_distance": (str, "euclidean"),
        "hidden": (int, 256), "proj_dim": (int, 128), "lr_min": ((int, float), 0.0),
    },
    "metrics": {"k": (int, 5), "baseline_repeats": (int, 1000), "split": (str, "test")},
    "classifier": {
        "hidden": (int, 64), "lr": ((int, float), 0.001), "max_epochs": (int, 500),
        "patience": (int, 20), "balance_eval": (bool, True),
    },
    "pipeline": {"seed": (int, 0), "out_dir": (str, "artifacts")},
}


def _walk(raw: dict) -> tuple[dict, list[str]]:
    """Flatten raw TOML against the schema; returns (values, errors)."""
    values: dict = {}
    errors: list[str] = []
    seen_sections = set()
    for section_path, keys in _SCHEMA.items():
        node = raw
        for part in section_path.split("."):
            node = node.get(part, {}) if isinstance(node, dict) else {}
        if not isinstance(node, dict):
            errors.append(f"{section_path}: expected a table")
            node = {}
        seen_sections.add(section_path)
        for key, (types, default) in keys.items():
            path = f"{section_path}.{key}"
            if key in node:
                value = node[key]
                if isinstance(value, bool) and types is not bool and bool not in (
                        types if isinstance(types, tuple) else (types,)):
                    errors.append(f"{path}: expected {types}, got bool")
                elif not isinstance(value, types):
                    errors.append(f"{path}: expected {getattr(types, '__name__', types)}, "
                                  f"got {type(value).__name__}")
                else:
                    values[path] = value
                    continue
            values[path] = default
    # unknown key detection
    def _check_unknown(node: dict, prefix: str):
        for key, value in node.items():
            path = f"{prefix}.{key}" if prefix else key
            if isinstance(value, dict):
                if path in _SCHEMA or any(s.startswith(path + ".") for s in _SCHEMA):
                    _check_unknown(value, path)
                else:
                    errors.append(f"{path}: unknown section")
            else:
                section, _, leaf = path.rpartition(".")
                if section not in _SCHEMA or leaf not in _SCHEMA[section]:
                    errors.append(f"{path}: unknown key")
    _check_unknown(raw, "")
    return values, errors


def validate_config(source) -> PipelineConfig:
    """Build a PipelineConfig from a TOML path or a raw dict.

    Raises ConfigError listing every violation with its key path. An empty
    file yields all documented defaults.
    """
    if isinstance(source, dict):
        raw = source
    else:
        with open(source, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError([f"TOML parse failure: {exc}"]) from exc

    values, errors = _walk(raw)
    notes: list[str] = []

    def get(path):
        return values[path]

    fractions = get("split.fractions")
    if len(fractions) != 3 or not all(isinstance(f, (int, float)) for f in fractions):
        errors.append("split.fractions: expected three numbers")
        fractions = [0.8, 0.1, 0.1]
    elif abs(sum(fractions) - 1.0) > 1e-9:
        errors.append(f"split.fractions: must sum to 1, got {sum(fractions)}")
    if get("split.mode") not in ("chronological", "random"):
        errors.append(f"split.mode: expected chronological|random, got {get('split.mode')!r}")
    if get("dataset.format") != "jsonl":
        errors.append(f"dataset.format: only jsonl is supported, got {get('dataset.format')!r}")

    for mode_key, allowed in (
        ("providers.generation.mode", ("mock", "http")),
        ("providers.discriminator.mode", ("mock", "http")),
        ("providers.embedding.mode", ("mock", "http", "file")),
    ):
        if get(mode_key) not in allowed:
            errors.append(f"{mode_key}: expected one of {allowed}, got {get(mode_key)!r}")
    if get("providers.embedding.dim") < 1:
        errors.append("providers.embedding.dim: must be >= 1")

    probs = {p: get(f"augment.{p}") for p in ("p_re", "p_s", "p_n", "p_ra")}
    for name, v in probs.items():
        if v < 0:
            errors.append(f"augment.{name}: probability must be >= 0")
    total = sum(probs.values())
    if total <= 0 and all(v >= 0 for v in probs.values()):
        errors.append("augment: action probabilities sum to zero")
    elif all(v >= 0 for v in probs.values()) and abs(total - 1.0) > 1e-9:
        notes.append(f"action probabilities sum to {total:g}; renormalizing")
    if get("augment.per_anchor") < 1:
        errors.append("augment.per_anchor: must be >= 1")
    if get("augment.max_retries") < 1:
        errors.append("augment.max_retries: must be >= 1")
    boundaries = get("augment.band_boundaries")
    if (len(boundaries) != 2 or not all(isinstance(b, (int, float)) for b in boundaries)
            or not 0.0 < boundaries[0] < boundaries[1] < 1.0):
        errors.append(f"augment.band_boundaries: expected 0 < lo < hi < 1, got {boundaries}")
        boundaries = [0.33, 0.66]

    for key, minimum in (("train.lr", 0.0), ("train.margin", 0.0),
                         ("train.temperature", 0.0), ("train.clip_norm", 0.0)):
        if get(key) <= minimum:
            errors.append(f"{key}: must be > {minimum}")
    if get("train.loss") not in ("wscl", "cwcl"):
        errors.append(f"train.loss: expected wscl|cwcl, got {get('train.loss')!r}")
    if get("train.cwcl_distance") not in ("euclidean", "neg_cosine"):
        errors.append("train.cwcl_distance: expected euclidean|neg_cosine, "
                      f"got {get('train.cwcl_distance')!r}")
    betas = get("train.betas")
    if len(betas) != 2 or not all(isinstance(b, (int, float)) and 0 < b < 1 for b in betas):
        errors.append(f"train.betas: expected two numbers in (0, 1), got {betas}")
        betas = [0.9, 0.999]
    for key in ("train.epochs", "train.batch_anchors", "train.hidden", "train.proj_dim",
                "metrics.k", "metrics.baseline_repeats", "classifier.hidden",
                "classifier.max_epochs", "classifier.patience"):
        if get(key) < 1:
            errors.append(f"{key}: must be >= 1")
    if get("metrics.split") not in ("train", "valid", "test"):
        errors.append(f"metrics.split: expected train|valid|test, got {get('metrics.split')!r}")
    if get("classifier.lr") <= 0:
        errors.append("classifier.lr: must be > 0")

    if errors:
        raise ConfigError(errors)

    prompt_overrides = {
        action: get(f"providers.generation.prompt_{key}")
        for action, key in (("Re", "re"), ("S", "s"), ("N", "n"))
        if get(f"providers.generation.prompt_{key}")
    }
    providers = ProviderSettings(
        generation_mode=get("providers.generation.mode"),
        generation_endpoint=get("providers.generation.endpoint"),
        generation_model=get("providers.generation.model"),
        generation_api_key_env=get("providers.generation.api_key_env"),
        generation_temperature=float(get("providers.generation.temperature")),
        generation_prompts=prompt_overrides,
        discriminator_mode=get("providers.discriminator.mode"),
        discriminator_endpoint=get("providers.discriminator.endpoint"),
        discriminator_api_key_env=get("providers.discriminator.api_key_env"),
        embedding_mode=get("providers.embedding.mode"),
        embedding_endpoint=get("providers.embedding.endpoint"),
        embedding_api_key_env=get("providers.embedding.api_key_env"),
        embedding_dim=get("providers.embedding.dim"),
        embedding_store_path=get("providers.embedding.store_path"),
        embedding_seed=get("providers.embedding.seed"),
    )
    seed = get("pipeline.seed")
    return PipelineConfig(
        dataset_path=get("dataset.path"),
        dataset_format=get("dataset.format"),
        fractions=tuple(float(f) for f in fractions),
        split_mode=get("split.mode"),
        relevance_filter=get("corpus.relevance_filter"),
        relevance_threshold=float(get("corpus.relevance_threshold")),
        reference_headlines=get("corpus.reference_headlines"),
        tfidf_threshold=float(get("corpus.tfidf_threshold")),
        max_words=get("corpus.max_words"),
        providers=providers,
        distribution=ActionDistribution(probs["p_re"], probs["p_s"], probs["p_n"], probs["p_ra"]),
        bands=QualityBands(
            negated=(0.0, float(boundaries[0])),
            shifted=(float(boundaries[0]), float(boundaries[1])),
            reworded=(float(boundaries[1]), 1.0),
        ),
        per_anchor=get("augment.per_anchor"),
        max_retries=get("augment.max_retries"),
        train=TrainConfig(
            lr=float(get("train.lr")), betas=(float(betas[0]), float(betas[1])),
            epochs=get("train.epochs"), batch_anchors=get("train.batch_anchors"),
            margin=float(get("train.margin")), temperature=float(get("train.temperature")),
            clip_norm=float(get("train.clip_norm")), loss=get("train.loss"),
            cwcl_distance=get("train.cwcl_distance"), hidden=get("train.hidden"),
            proj_dim=get("train.proj_dim"), lr_min=float(get("train.lr_min")), seed=seed,
        ),
        metrics_k=get("metrics.k"),
        baseline_repeats=get("metrics.baseline_repeats"),
        metrics_split=get("metrics.split"),
        classifier=ClassifierConfig(
            hidden=get("classifier.hidden"), lr=float(get("classifier.lr")),
            max_epochs=get("classifier.max_epochs"), patience=get("classifier.patience"),
            seed=seed,
        ),
        balance_eval=get("classifier.balance_eval"),
        seed=seed,
        out_dir=get("pipeline.out_dir"),
        notes=notes,
    )


def _api_key(env_name: str) -> str | None:
    if not env_name:
        return None
    value = os.environ.get(env_name)
    if value is None:
        raise ConfigError([f"environment variable {env_name} is not set"])
    return value


def build_generation_provider(cfg: PipelineConfig):
    p = cfg.providers
    if p.generation_mode == "mock":
        return MockGenerator(seed=cfg.seed)
    return HttpGenerator(endpoint=p.generation_endpoint, model=p.generation_model,
                         api_key=_api_key(p.generation_api_key_env),
                         temperature=p.generation_temperature,
                         prompts=p.generation_prompts)


def build_discriminator_provider(cfg: PipelineConfig):
    p = cfg.providers
    if p.discriminator_mode == "mock":
        return MockDiscriminator(seed=cfg.seed)
    return HttpDiscriminator(endpoint=p.discriminator_endpoint,
                             api_key=_api_key(p.discriminator_api_key_env))


def build_embedding_provider(cfg: PipelineConfig, store_path=None):
    from .embeddings import EmbeddingStore, FileEmbedder, HttpEmbedder, MockEmbedder

    p = cfg.providers
    if store_path is not None:
        return FileEmbedder(EmbeddingStore.load(store_path))
    if p.embedding_mode == "mock":
        return MockEmbedder(dim=p.embedding_dim, seed=p.embedding_seed)
    if p.embedding_mode == "file":
        if not p.embedding_store_path:
            raise ConfigError(["providers.embedding.store_path: required for file mode"])
        return FileEmbedder(EmbeddingStore.load(p.embedding_store_path))
    return HttpEmbedder(endpoint=p.embedding_endpoint, dim=p.embedding_dim,
                        api_key=_api_key(p.embedding_api_key_env))

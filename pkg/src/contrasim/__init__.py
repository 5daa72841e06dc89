"""Weighted contrastive similarity spaces for daily news sets."""

__version__ = "0.1.0"

from .augment import (
    ActionDistribution,
    AugmentedSet,
    AugmentedSlot,
    QualityBands,
    build_augmented_dataset,
    generate_variant,
    sample_action,
    sample_length,
    transform,
)
from .corpus import (
    CorpusSplit,
    DailyNewsSet,
    Headline,
    MarketLabel,
    derive_label,
    ingest_dataset,
    label_from_pct,
    relevance_filter,
    split_corpus,
    tfidf_prune,
)
from .embeddings import EmbeddingStore, MockEmbedder, embed_dns, embed_text, normalize
from .heads import evaluate, make_features, train_classifier
from .projection import (
    ProjectionParams,
    TrainConfig,
    adam_step,
    backward,
    clip_gradients,
    cosine_lr,
    forward,
    loss_cwcl,
    loss_wscl,
    train,
)
from .retrieval import SimilarDayHit, build_index, query
from .simscore import Action, ActionCounts, per_action_sim, score
from .spacemetrics import (
    audit_space,
    g_knn,
    jsd_local_global,
    kl_local_global,
    knn_accuracy,
    knn_indices,
    shuffled_baseline,
)

"""Daily news set datasets: ingestion, labeling, filtering, splitting.

A daily news set (DNS) is all headlines of one calendar day plus an optional
market-direction label. Datasets live as JSONL, one day per line:

    {"date": "YYYY-MM-DD", "headlines": ["..."], "label": "Rise|Neutral|Fall",
     "pct_change": 1.23, "source": "wsj|tweet|review|other"}

`label` / `pct_change` / `source` are optional. File labels are trusted; when
both a label and pct_change are present they must agree with the +-0.5%
thresholds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import date as Date
from enum import Enum

import numpy as np

from .embeddings import embed_text

VALID_SOURCES = ("wsj", "tweet", "review", "other")


class MarketLabel(Enum):
    FALL = "Fall"
    NEUTRAL = "Neutral"
    RISE = "Rise"

    def display(self, source: str = "wsj") -> str:
        """Review corpora reuse the three slots as Low/Medium/High."""
        if source == "review":
            return {"Fall": "Low", "Neutral": "Medium", "Rise": "High"}[self.value]
        return self.value


@dataclass(frozen=True)
class Headline:
    id: str
    date: Date
    text: str
    source: str = "other"

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"headline {self.id!r}: empty text")
        if self.source not in VALID_SOURCES:
            raise ValueError(f"headline {self.id!r}: unknown source {self.source!r}")


@dataclass(frozen=True)
class DailyNewsSet:
    date: Date
    headlines: tuple[Headline, ...]
    label: MarketLabel | None = None
    pct_change: float | None = None

    def __post_init__(self):
        if len(self.headlines) == 0:
            raise ValueError(f"{self.date}: empty headline list")
        for h in self.headlines:
            if h.date != self.date:
                raise ValueError(f"{self.date}: headline {h.id!r} dated {h.date}")
        if self.label is not None and self.pct_change is not None:
            if label_from_pct(self.pct_change) is not self.label:
                raise ValueError(
                    f"{self.date}: label {self.label.value} inconsistent with "
                    f"pct_change {self.pct_change}"
                )

    def text(self, joiner: str = "\n") -> str:
        return joiner.join(h.text for h in self.headlines)


@dataclass
class CorpusSplit:
    train: list[DailyNewsSet]
    valid: list[DailyNewsSet]
    test: list[DailyNewsSet]
    split_mode: str = "chronological"

    def all_days(self) -> list[DailyNewsSet]:
        return self.train + self.valid + self.test


def label_from_pct(pct_change: float) -> MarketLabel:
    """Three-way direction label; the +-0.5% band is Neutral, inclusive."""
    if pct_change < -0.5:
        return MarketLabel.FALL
    if pct_change > 0.5:
        return MarketLabel.RISE
    return MarketLabel.NEUTRAL


def derive_label(close_prev: float, close_curr: float) -> tuple[float, MarketLabel]:
    """Percent change between consecutive closes and its direction label."""
    if close_prev <= 0:
        raise ValueError(f"close_prev must be positive, got {close_prev}")
    pct = (close_curr - close_prev) / close_prev * 100.0
    return pct, label_from_pct(pct)


def label_from_review_score(stars: float, breakpoints: tuple[float, float] = (5.5, 7.5)) -> MarketLabel:
    """Map a 0-10 review score onto the three label slots (Low/Medium/High)."""
    lo, hi = breakpoints
    if stars <= lo:
        return MarketLabel.FALL
    if stars <= hi:
        return MarketLabel.NEUTRAL
    return MarketLabel.RISE


def ingest_dataset(path, format: str = "jsonl") -> list[DailyNewsSet]:
    """Read a dataset file into daily news sets, one per line, in file order.

    Malformed lines, duplicate dates, empty headline lists, and inconsistent
    label/pct_change pairs are rejected with the offending line number.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported dataset format {format!r}")
    days: list[DailyNewsSet] = []
    seen_dates: set[Date] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                day = _parse_line(line)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if day.date in seen_dates:
                raise ValueError(f"{path}:{lineno}: duplicate date {day.date}")
            seen_dates.add(day.date)
            days.append(day)
    return days


def _parse_line(line: str) -> DailyNewsSet:
    rec = json.loads(line)
    if not isinstance(rec, dict):
        raise ValueError("line is not a JSON object")
    known = {"date", "headlines", "label", "pct_change", "source"}
    unknown = set(rec) - known
    if unknown:
        raise ValueError(f"unknown keys {sorted(unknown)}")
    day_date = Date.fromisoformat(rec["date"])
    texts = rec["headlines"]
    if not isinstance(texts, list) or not texts:
        raise ValueError("empty headline list")
    source = rec.get("source", "other")
    headlines = tuple(
        Headline(id=f"{day_date.isoformat()}#{i}", date=day_date, text=str(t), source=source)
        for i, t in enumerate(texts)
    )
    label = MarketLabel(rec["label"]) if "label" in rec else None
    pct = float(rec["pct_change"]) if "pct_change" in rec else None
    return DailyNewsSet(date=day_date, headlines=headlines, label=label, pct_change=pct)


def save_dataset(days: list[DailyNewsSet], path) -> None:
    """Inverse of ingest_dataset (headline source taken from the first headline)."""
    with open(path, "w", encoding="utf-8") as fh:
        for day in days:
            rec: dict = {"date": day.date.isoformat(), "headlines": [h.text for h in day.headlines]}
            if day.label is not None:
                rec["label"] = day.label.value
            if day.pct_change is not None:
                rec["pct_change"] = day.pct_change
            src = day.headlines[0].source
            if src != "other":
                rec["source"] = src
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# tf-idf pruning of overlong day texts
# ---------------------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    """Words are maximal runs of non-whitespace."""
    return text.split()


class TfidfModel:
    """Word scores for pruning: relative in-text frequency times smoothed idf.

    idf(w) = ln((1 + N) / (1 + df(w))) + 1 over the training-split day texts.
    Raw counts would put every score at or above 1 (idf >= 1), making any
    threshold below 1 unreachable, so term frequency is the in-text proportion.
    """

    def __init__(self):
        self.n_docs = 0
        self.df: dict[str, int] = {}
        self.fitted = False

    def fit(self, documents: list[str]) -> "TfidfModel":
        self.n_docs = len(documents)
        self.df = {}
        for doc in documents:
            for word in set(tokenize(doc)):
                self.df[word] = self.df.get(word, 0) + 1
        self.fitted = True
        return self

    @classmethod
    def fit_days(cls, days: list[DailyNewsSet]) -> "TfidfModel":
        return cls().fit([day.text() for day in days])

    def idf(self, word: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df.get(word, 0))) + 1.0

    def word_scores(self, text: str) -> dict[str, float]:
        if not self.fitted:
            raise ValueError("tf-idf model is unfitted; fit on the training split first")
        words = tokenize(text)
        if not words:
            return {}
        counts: dict[str, int] = {}
        for w in words:
            counts[w] = counts.get(w, 0) + 1
        total = len(words)
        return {w: (c / total) * self.idf(w) for w, c in counts.items()}


def tfidf_prune(text: str, model: TfidfModel, threshold: float = 0.2, max_words: int = 3000) -> str:
    """Shorten an overlong day text.

    Only texts longer than `max_words` are touched: words scoring below
    `threshold` are dropped (original order kept), then the result is hard
    truncated to `max_words`.
    """
    if not model.fitted:
        raise ValueError("tf-idf model is unfitted; fit on the training split first")
    words = tokenize(text)
    if len(words) <= max_words:
        return text
    scores = model.word_scores(text)
    kept = [w for w in words if scores[w] >= threshold]
    return " ".join(kept[:max_words])


# ---------------------------------------------------------------------------
# Relevance filtering against reference headlines
# ---------------------------------------------------------------------------

def relevance_filter(headlines, reference_embeddings, embedder, threshold: float = 0.2):
    """Keep headlines whose best cosine against any reference is >= threshold.

    Order is preserved. Provider failures are re-raised with the offending
    headline id attached.
    """
    refs = [np.asarray(r, dtype=np.float64) for r in reference_embeddings]
    if not refs:
        raise ValueError("reference embedding list is empty")
    dims = {r.shape[0] for r in refs}
    if len(dims) != 1:
        raise ValueError(f"reference embeddings disagree on dimension: {sorted(dims)}")
    ref_matrix = np.stack(refs)
    kept = []
    for h in headlines:
        try:
            vec = embed_text(h.text, embedder)
        except Exception as exc:
            raise RuntimeError(f"embedding provider failed on headline {h.id!r}: {exc}") from exc
        if vec.shape[0] != ref_matrix.shape[1]:
            raise ValueError(
                f"headline {h.id!r}: embedding dim {vec.shape[0]} != reference dim {ref_matrix.shape[1]}"
            )
        if float(np.max(ref_matrix @ vec)) >= threshold:
            kept.append(h)
    return kept


# ---------------------------------------------------------------------------
# Train/valid/test splitting
# ---------------------------------------------------------------------------

def split_corpus(
    data: list[DailyNewsSet],
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
    mode: str = "chronological",
    seed: int = 0,
) -> CorpusSplit:
    """Cut a corpus into train/valid/test.

    Chronological mode sorts by date and cuts, so test holds the latest days;
    random mode shuffles with the seed first. Valid and test sizes are the
    rounded fractions, floored at one element each, so every piece is
    non-empty whenever there are at least three days.
    """
    if len(data) < 3:
        raise ValueError(f"need at least 3 daily news sets to split, got {len(data)}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    if any(f < 0 for f in fractions):
        raise ValueError(f"fractions must be non-negative, got {fractions}")

    n = len(data)
    if mode == "chronological":
        ordered = sorted(data, key=lambda d: d.date)
    elif mode == "random":
        rng = np.random.Generator(np.random.PCG64(seed))
        ordered = [data[i] for i in rng.permutation(n)]
    else:
        raise ValueError(f"unknown split mode {mode!r}")

    n_valid = max(1, int(fractions[1] * n + 0.5))
    n_test = max(1, int(fractions[2] * n + 0.5))
    n_train = n - n_valid - n_test
    if n_train < 1:
        raise ValueError(f"split of {n} days leaves no training data")
    return CorpusSplit(
        train=ordered[:n_train],
        valid=ordered[n_train:n_train + n_valid],
        test=ordered[n_train + n_valid:],
        split_mode=mode if mode == "chronological" else f"random(seed={seed})",
    )

"""Similar-day lookup in the learned similarity space.

Historical days are indexed by their projected embeddings; a query (a day or
raw text) is projected the same way and the top-k days by cosine similarity
come back. Exact scan, no approximate search: corpora are thousands of days.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import date as Date

import numpy as np

from .embeddings import embed_dns, embed_text
from .projection import ProjectionParams, forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimilarDayHit:
    date: Date
    score: float
    preview: str


@dataclass
class DayIndex:
    dates: list[Date]
    vectors: np.ndarray  # (n, d) unit rows
    previews: list[str]
    space: str = "proj"

    def __len__(self) -> int:
        return len(self.dates)


def build_index(days, proj_params: ProjectionParams | None, provider,
                space: str = "proj", joiner: str = "\n") -> DayIndex:
    """Index every day's projection (or raw encoder embedding with
    space="enc"). Days whose embedding cannot be resolved are skipped with a
    warning; an index with no entries is an error."""
    if space not in ("proj", "enc"):
        raise ValueError(f"unknown index space {space!r}")
    if space == "proj" and proj_params is None:
        raise ValueError("projection-space index needs projection parameters")
    dates, rows, previews = [], [], []
    for day in days:
        try:
            e = embed_dns(day, provider, joiner=joiner)
        except Exception as exc:
            logger.warning("skipping %s: %s", day.date, exc)
            continue
        vec = forward(proj_params, e)[0] if space == "proj" else e
        dates.append(day.date)
        rows.append(vec)
        previews.append(day.headlines[0].text)
    if not rows:
        raise ValueError("no days could be indexed")
    return DayIndex(dates=dates, vectors=np.stack(rows), previews=previews, space=space)


def save_index(index: DayIndex, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for date, vec, preview in zip(index.dates, index.vectors, index.previews):
            rec = {
                "key": date.isoformat(),
                "dim": int(index.vectors.shape[1]),
                "vector": vec.tolist(),
                "preview": preview,
                "space": index.space,
            }
            fh.write(json.dumps(rec) + "\n")


def load_index(path) -> DayIndex:
    dates, rows, previews, space = [], [], [], "proj"
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                dates.append(Date.fromisoformat(rec["key"]))
                rows.append(np.asarray(rec["vector"], dtype=np.float64))
                previews.append(rec.get("preview", ""))
                space = rec.get("space", "proj")
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed index record: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: empty index")
    return DayIndex(dates=dates, vectors=np.stack(rows), previews=previews, space=space)


def query(index: DayIndex, query_input, k: int,
          proj_params: ProjectionParams | None = None, provider=None,
          joiner: str = "\n") -> list[SimilarDayHit]:
    """Top-k most similar indexed days for a query day or raw text.

    A query day already present in the index never matches itself. Results
    are sorted by descending cosine, ties by ascending date. Asking for more
    hits than there are candidates returns them all (with a warning).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise ValueError("empty index")

    query_date = getattr(query_input, "date", None)
    if isinstance(query_input, str):
        e = embed_text(query_input, provider)
    else:
        e = embed_dns(query_input, provider, joiner=joiner)
    vec = forward(proj_params, e)[0] if index.space == "proj" else e

    scores = index.vectors @ vec
    candidates = [
        (idx, d) for idx, d in enumerate(index.dates) if query_date is None or d != query_date
    ]
    if not candidates:
        raise ValueError("no candidates after excluding the query's own date")
    if k > len(candidates):
        logger.warning("k=%d exceeds candidate count %d; returning all", k, len(candidates))
        k = len(candidates)
    ranked = sorted(candidates, key=lambda item: (-scores[item[0]], item[1]))
    return [
        SimilarDayHit(date=d, score=float(scores[idx]), preview=index.previews[idx])
        for idx, d in ranked[:k]
    ]

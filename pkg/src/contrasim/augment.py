"""Stochastic augmentation of daily news sets.

One augmented set is built slot by slot: the slot count is drawn from the
empirical distribution of day sizes, each slot samples an action (reword /
shift / negate / random-replace), generated variants are quality-gated by the
discriminator into per-action score bands, and the finished slots are
shuffled. Slots whose generations keep failing the gate degrade to
random-replacement so the slot count stays fixed.

All randomness is drawn in one pre-pass before any provider call, so a fixed
seed gives identical output regardless of provider latency or retry count.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import date as Date
from pathlib import Path

import numpy as np

from .corpus import DailyNewsSet, Headline
from .providers import ProviderError
from .simscore import Action, score_actions


@dataclass(frozen=True)
class ActionDistribution:
    """Categorical distribution over the four slot actions.

    Weights only need to be non-negative with a positive sum; they are
    renormalized on construction (the reference weights 0.05/0.025/0.05/0.775
    sum to 0.9 and are used renormalized).
    """

    p_re: float
    p_s: float
    p_n: float
    p_ra: float

    def __post_init__(self):
        weights = (self.p_re, self.p_s, self.p_n, self.p_ra)
        if any(w < 0 for w in weights):
            raise ValueError(f"probability must be >= 0, got {weights}")
        total = sum(weights)
        if total <= 0:
            raise ValueError("action weights sum to zero")
        object.__setattr__(self, "p_re", self.p_re / total)
        object.__setattr__(self, "p_s", self.p_s / total)
        object.__setattr__(self, "p_n", self.p_n / total)
        object.__setattr__(self, "p_ra", self.p_ra / total)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p_re, self.p_s, self.p_n, self.p_ra)


#: Reference action weights (renormalized from a 0.9 total on construction).
DEFAULT_DISTRIBUTION = ActionDistribution(p_re=0.05, p_s=0.025, p_n=0.05, p_ra=0.775)

_ACTION_ORDER = (Action.REWORD, Action.SHIFT, Action.NEGATE, Action.RANDOM)


@dataclass(frozen=True)
class QualityBands:
    """Discriminator-score bands per generated action.

    Bands are lower-inclusive and upper-exclusive, except the topmost band
    also includes 1.0, so the three bands cover [0, 1] exactly.
    """

    negated: tuple[float, float] = (0.0, 0.33)
    shifted: tuple[float, float] = (0.33, 0.66)
    reworded: tuple[float, float] = (0.66, 1.0)

    def __post_init__(self):
        bands = (self.negated, self.shifted, self.reworded)
        if self.negated[0] != 0.0 or self.reworded[1] != 1.0:
            raise ValueError(f"bands must cover [0, 1], got {bands}")
        if self.negated[1] != self.shifted[0] or self.shifted[1] != self.reworded[0]:
            raise ValueError(f"bands must be contiguous, got {bands}")
        if any(lo >= hi for lo, hi in bands):
            raise ValueError(f"bands must be non-empty, got {bands}")

    def band_for(self, action: Action) -> tuple[float, float]:
        try:
            return {
                Action.NEGATE: self.negated,
                Action.SHIFT: self.shifted,
                Action.REWORD: self.reworded,
            }[action]
        except KeyError:
            raise ValueError(f"no quality band for action {action}") from None

    def contains(self, action: Action, disc_score: float) -> bool:
        lo, hi = self.band_for(action)
        if hi == 1.0:
            return lo <= disc_score <= hi
        return lo <= disc_score < hi


DEFAULT_BANDS = QualityBands()


@dataclass(frozen=True)
class AugmentedSlot:
    action: Action
    source_id: str
    text: str
    disc_score: float | None = None


@dataclass(frozen=True)
class AugmentedSet:
    """An augmented day: tagged slots plus the similarity score of the tag multiset."""

    base_date: Date
    slots: tuple[AugmentedSlot, ...]
    s: float

    def __post_init__(self):
        if not self.slots:
            raise ValueError("augmented set has no slots")
        expected = score_actions(slot.action for slot in self.slots)
        if self.s != expected:
            raise ValueError(f"stored s={self.s} != recomputed {expected}")

    def to_record(self, replicate: int | None = None) -> dict:
        rec: dict = {
            "base_date": self.base_date.isoformat(),
            "slots": [
                {
                    "action": slot.action.value,
                    "source_id": slot.source_id,
                    "text": slot.text,
                    "disc_score": slot.disc_score,
                }
                for slot in self.slots
            ],
            "s": self.s,
        }
        if replicate is not None:
            rec["replicate"] = replicate
        rec["checksum"] = record_checksum(rec)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "AugmentedSet":
        slots = tuple(
            AugmentedSlot(
                action=Action(sl["action"]),
                source_id=sl["source_id"],
                text=sl["text"],
                disc_score=sl["disc_score"],
            )
            for sl in rec["slots"]
        )
        return cls(base_date=Date.fromisoformat(rec["base_date"]), slots=slots, s=rec["s"])


def record_checksum(rec: dict) -> str:
    """sha256 of the record's canonical JSON, checksum field excluded."""
    body = {k: v for k, v in rec.items() if k != "checksum"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()


def sample_length(corpus_lengths, rng: np.random.Generator) -> int:
    """Draw a slot count from the empirical multiset of day sizes."""
    lengths = list(corpus_lengths)
    if not lengths:
        raise ValueError("empty length multiset")
    n = int(lengths[rng.integers(0, len(lengths))])
    if n < 1:
        raise ValueError(f"sampled non-positive length {n}")
    return n


def sample_action(dist: ActionDistribution, rng: np.random.Generator) -> Action:
    """One categorical draw over the four actions."""
    u = rng.random()
    acc = 0.0
    for action, p in zip(_ACTION_ORDER, dist.as_tuple()):
        acc += p
        if u < acc:
            return action
    return _ACTION_ORDER[-1]


def generate_variant(
    action: Action,
    base: Headline,
    gen,
    disc,
    bands: QualityBands = DEFAULT_BANDS,
    max_retries: int = 3,
) -> tuple[str, bool, float]:
    """Generate one quality-gated variant of a headline.

    Issues the action's prompt to the generator, scores (base, candidate) with
    the discriminator, and accepts iff the score lies in the action's band.
    Spends at most `max_retries` generation attempts; on exhaustion returns
    the last candidate with accepted=False.
    """
    if action not in (Action.REWORD, Action.SHIFT, Action.NEGATE):
        raise ValueError(f"generate_variant does not handle {action}")
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    candidate, disc_score = "", 0.0
    for attempt in range(max_retries):
        candidate = gen.generate(action.value, base.text, attempt=attempt)
        if not candidate.strip():
            raise ProviderError(f"empty generation for headline {base.id!r}")
        disc_score = float(disc.score(base.text, candidate))
        if not 0.0 <= disc_score <= 1.0:
            raise ProviderError(f"discriminator score {disc_score} outside [0, 1]")
        if bands.contains(action, disc_score):
            return candidate, True, disc_score
    return candidate, False, disc_score


def transform(
    base: DailyNewsSet,
    corpus: list[DailyNewsSet],
    dist: ActionDistribution,
    gen,
    disc,
    rng: np.random.Generator,
    bands: QualityBands = DEFAULT_BANDS,
    max_retries: int = 3,
) -> AugmentedSet:
    """Produce one augmented set for `base`.

    Slot count comes from the corpus length distribution; per slot an action
    is sampled; reword/shift/negate act on a uniformly drawn base headline
    (degrading to random-replace when the quality gate keeps rejecting);
    random-replace picks a uniform headline from the corpus outside the base
    day. Slots are shuffled before scoring.
    """
    pool = [h for day in corpus if day.date != base.date for h in day.headlines]
    if not pool:
        raise ValueError("corpus has no headlines outside the base day")

    # Single deterministic pre-pass: every draw happens before any provider
    # call, so provider behavior cannot perturb the stream.
    n = sample_length([len(day.headlines) for day in corpus], rng)
    actions = [sample_action(dist, rng) for _ in range(n)]
    base_picks = [int(rng.integers(0, len(base.headlines))) for _ in range(n)]
    pool_picks = [int(rng.integers(0, len(pool))) for _ in range(n)]
    order = rng.permutation(n)

    slots = []
    for action, base_idx, pool_idx in zip(actions, base_picks, pool_picks):
        if action is Action.RANDOM:
            picked = pool[pool_idx]
            slots.append(AugmentedSlot(Action.RANDOM, picked.id, picked.text))
            continue
        source = base.headlines[base_idx]
        text, accepted, disc_score = generate_variant(
            action, source, gen, disc, bands=bands, max_retries=max_retries
        )
        if accepted:
            slots.append(AugmentedSlot(action, source.id, text, disc_score))
        else:
            fallback = pool[pool_idx]
            slots.append(AugmentedSlot(Action.RANDOM, fallback.id, fallback.text))

    shuffled = tuple(slots[i] for i in order)
    return AugmentedSet(
        base_date=base.date,
        slots=shuffled,
        s=score_actions(slot.action for slot in shuffled),
    )


def derive_record_seed(seed: int, base_date: Date, replicate: int) -> int:
    """Stable per-record seed, independent of generation order."""
    digest = hashlib.sha256(f"{seed}:{base_date.isoformat()}:{replicate}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def build_augmented_dataset(
    train_days: list[DailyNewsSet],
    per_anchor: int,
    out_path,
    dist: ActionDistribution = DEFAULT_DISTRIBUTION,
    gen=None,
    disc=None,
    seed: int = 0,
    bands: QualityBands = DEFAULT_BANDS,
    max_retries: int = 3,
) -> int:
    """Write `per_anchor` augmented sets per training day as JSONL.

    Records are generated from per-(day, replicate) derived seeds, so the file
    is byte-identical across runs and resumable: existing records whose
    checksums verify are reused instead of regenerated, anything else
    (including a torn final line) is rebuilt. Returns the record count.
    """
    if per_anchor < 1:
        raise ValueError(f"per_anchor must be >= 1, got {per_anchor}")
    if not train_days:
        raise ValueError("empty training split")
    out_path = Path(out_path)

    existing: dict[tuple[str, int], str] = {}
    if out_path.exists():
        with open(out_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    if rec.get("checksum") != record_checksum(rec):
                        continue
                    AugmentedSet.from_record(rec)
                    existing[(rec["base_date"], int(rec["replicate"]))] = line
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    continue  # torn or foreign line: regenerate that record

    tmp_path = out_path.with_suffix(out_path.suffix + ".tmp")
    count = 0
    with open(tmp_path, "w", encoding="utf-8") as fh:
        for day in train_days:
            for j in range(per_anchor):
                key = (day.date.isoformat(), j)
                line = existing.get(key)
                if line is None:
                    rng = np.random.Generator(np.random.PCG64(derive_record_seed(seed, day.date, j)))
                    aug = transform(day, train_days, dist, gen, disc, rng,
                                    bands=bands, max_retries=max_retries)
                    line = json.dumps(aug.to_record(replicate=j), sort_keys=True)
                fh.write(line + "\n")
                count += 1
    tmp_path.replace(out_path)
    return count


def load_augmented_dataset(path) -> list[tuple[AugmentedSet, int]]:
    """Read an augmented JSONL file, verifying checksums; returns (set, replicate) pairs."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if rec.get("checksum") != record_checksum(rec):
                raise ValueError(f"{path}:{lineno}: checksum mismatch (partial write?)")
            out.append((AugmentedSet.from_record(rec), int(rec.get("replicate", 0))))
    return out

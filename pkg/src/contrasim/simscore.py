"""Similarity scoring for augmented daily news sets.

An augmented set is described by how many of its headline slots were produced
by each action: reword (``re``), semantic shift (``s``), negate (``n``), and
random replacement (``ra``). Rewords count 1.0, shifts 0.5, negations and
random picks 0.0. The per-set score compresses the achieved fraction of the
maximum through a logarithmic curve so that high-similarity actions dominate:

    score = ln(1 + (achieved / max_possible) * (e - 1))

which maps the fraction 0 -> 0.0 and 1 -> 1.0, superlinearly in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Action(Enum):
    """One headline-slot augmentation action."""

    REWORD = "Re"
    SHIFT = "S"
    NEGATE = "N"
    RANDOM = "Ra"


#: Per-action similarity contribution of a single slot.
ACTION_SIM = {
    Action.REWORD: 1.0,
    Action.SHIFT: 0.5,
    Action.NEGATE: 0.0,
    Action.RANDOM: 0.0,
}


def per_action_sim(action: Action) -> float:
    """Similarity contribution of one slot produced by `action`."""
    return ACTION_SIM[action]


@dataclass(frozen=True)
class ActionCounts:
    """Multiset of slot actions for one augmented set."""

    c_re: int = 0
    c_s: int = 0
    c_n: int = 0
    c_ra: int = 0

    def __post_init__(self):
        for name in ("c_re", "c_s", "c_n", "c_ra"):
            v = getattr(self, name)
            if v < 0 or v != int(v):
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.c_re + self.c_s + self.c_n + self.c_ra

    @classmethod
    def from_actions(cls, actions) -> "ActionCounts":
        counts = {a: 0 for a in Action}
        for a in actions:
            counts[a] += 1
        return cls(
            c_re=counts[Action.REWORD],
            c_s=counts[Action.SHIFT],
            c_n=counts[Action.NEGATE],
            c_ra=counts[Action.RANDOM],
        )


def score(counts: ActionCounts) -> float:
    """Similarity score in [0, 1] for an action multiset.

    The maximum possible total is one full reword credit per slot, so the
    achieved/maximum ratio lies in [0, 1] and the log curve maps it back onto
    [0, 1]. Clamped against rounding at the endpoints.

    Raises ValueError on an empty multiset.
    """
    total = counts.total
    if total < 1:
        raise ValueError("action multiset must contain at least one slot")
    raw = 1.0 * counts.c_re + 0.5 * counts.c_s
    ratio = raw / total
    s = math.log(1.0 + ratio * (math.e - 1.0))
    return min(1.0, max(0.0, s))


def score_actions(actions) -> float:
    """`score` applied to an iterable of Action tags."""
    return score(ActionCounts.from_actions(actions))
